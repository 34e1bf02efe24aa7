use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::HarnessError;
use crate::autodiff::AdamConfig;
use crate::nets::Activation;
use crate::objectives::{CycleMode, MapMode, NetLayout, ObjectiveSpec, Sides};

/// Model family a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Joint matching plus an explicit `ℓ2` cycle on x, weighted by `lambda`.
    #[default]
    Alice,
    /// Joint matching plus an adversarial cycle on x with feature matching.
    AliceAdversarial,
    Ali,
    /// Denoising autoencoder baseline, trained by `ℓ2` reconstruction only.
    Dae,
    /// Uses `objective` as given.
    Custom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Alice => "alice",
            Method::AliceAdversarial => "alice-adversarial",
            Method::Ali => "ali",
            Method::Dae => "dae",
            Method::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_value(Value::String(s.to_string())).map_err(|_| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub layers: usize,
    pub width: usize,
}

impl NetShape {
    pub fn new(layers: usize, width: usize) -> Self {
        Self { layers, width }
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.width; self.layers]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Dataset {
    /// Five-component mixture in x, standard normal prior in z.
    Gmm,
    /// Five-component mixture in x, two-component mixture in z, with the
    /// first `anchors` of the five sign-flipped pairs supervised.
    Pairing { anchors: usize },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Gmm
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Weight of the cycle term for the preset methods.
    pub lambda: f64,
    /// Objective of `custom` runs; overwritten by the other presets.
    pub objective: ObjectiveSpec,
    pub decoder: NetShape,
    pub encoder: NetShape,
    pub discriminator: NetShape,
    pub generator_activation: Activation,
    pub discriminator_activation: Activation,
    pub noise_dim: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Discriminator steps per minibatch.
    pub d_updates: usize,
    /// Generator steps per minibatch.
    pub g_updates: usize,
    /// Initialization and training noise.
    pub seed: u64,
    /// Training and test data draws.
    pub data_seed: u64,
    pub dataset: Dataset,
    pub dae_noise_std: f64,
    /// Classifier used for the sample score.
    pub classifier_seed: u64,
    pub bootstrap: usize,
    pub divergence_logit: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Alice,
            lambda: 1.0,
            objective: ObjectiveSpec::default(),
            decoder: NetShape::new(2, 64),
            encoder: NetShape::new(2, 64),
            discriminator: NetShape::new(2, 64),
            generator_activation: Activation::Tanh,
            discriminator_activation: Activation::Relu,
            noise_dim: 2,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 100,
            epochs: 200,
            d_updates: 1,
            g_updates: 1,
            seed: 0,
            data_seed: 0,
            dataset: Dataset::Gmm,
            dae_noise_std: 0.1,
            classifier_seed: 0,
            bootstrap: 20,
            divergence_logit: 1e4,
        }
    }
}

impl RunConfig {
    /// Shorter, faster schedule used for the desk-scale experiments: 75
    /// epochs at learning rate 2e-3.
    pub fn desk() -> Self {
        Self {
            lr: 2e-3,
            epochs: 75,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.epochs > 0 && self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.d_updates == 0 || self.g_updates == 0 {
            return bad("d_updates and g_updates must be >= 1".into());
        }
        for (n, s) in [("decoder", &self.decoder), ("encoder", &self.encoder), ("discriminator", &self.discriminator)] {
            if s.layers == 0 || s.width == 0 {
                return bad(format!("{n} needs at least one hidden layer of width >= 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.dae_noise_std >= 0.0) {
            return bad("dae_noise_std must be >= 0".into());
        }
        if let Dataset::Pairing { anchors } = self.dataset {
            if anchors > crate::data::PAIRING_ANCHORS.len() {
                return bad(format!("at most 5 anchors, got {anchors}"));
            }
            if self.method == Method::Dae {
                return bad("the pairing task has no autoencoder baseline".into());
            }
        }
        if self.method != Method::Dae {
            self.resolved_objective().validate()?;
        }
        Ok(())
    }

    /// The objective the run trains. Pairing runs add the supervised
    /// mapping term when anchors are present.
    pub fn resolved_objective(&self) -> ObjectiveSpec {
        let mut spec = match self.method {
            Method::Alice => ObjectiveSpec::alice(self.lambda),
            Method::AliceAdversarial => ObjectiveSpec {
                lambda_cycle: self.lambda,
                ..ObjectiveSpec::alice_adversarial()
            },
            Method::Ali | Method::Dae => ObjectiveSpec::ali(),
            Method::Custom => self.objective.clone(),
        };
        if let Dataset::Pairing { anchors } = self.dataset {
            if self.method != Method::Custom {
                spec.map_mode = if anchors == 0 { MapMode::None } else { MapMode::ExplicitL2 };
                spec.map_sides = Sides::Both;
            }
        }
        spec
    }

    pub fn layout(&self) -> NetLayout {
        NetLayout {
            x_dim: 2,
            z_dim: 2,
            noise_dim: self.noise_dim,
            decoder_hidden: self.decoder.hidden(),
            encoder_hidden: self.encoder.hidden(),
            discriminator_hidden: self.discriminator.hidden(),
            generator_activation: self.generator_activation,
            discriminator_activation: self.discriminator_activation,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    /// FNV-1a over the canonical JSON encoding, as 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Applies `key=value` overrides. Keys are dotted field paths
    /// (`decoder.width`, `objective.cycle_mode`); values parse as JSON and
    /// fall back to bare strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, HarnessError> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("override {o:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut v;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|m| m.get_mut(part))
                    .ok_or_else(|| HarnessError::Config(format!("unknown field {key:?}")))?;
            }
            *slot = value;
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Names of every overridable leaf field, dotted.
    pub fn field_paths() -> Vec<String> {
        fn walk(prefix: &str, v: &Value, out: &mut Vec<String>) {
            match v {
                Value::Object(m) => {
                    for (k, child) in m {
                        let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                        walk(&p, child, out);
                    }
                }
                _ => out.push(prefix.to_string()),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(RunConfig::default()).expect("serializes"), &mut out);
        out
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Whether the run uses the explicit cycle term.
    pub fn has_explicit_cycle(&self) -> bool {
        self.method != Method::Dae
            && matches!(self.resolved_objective().cycle_mode, CycleMode::ExplicitL1 | CycleMode::ExplicitL2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
        assert!(RunConfig::from_json(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::default()
            .with_overrides(&[
                "decoder.width=256",
                "method=ali",
                "objective.cycle_mode=explicit-l1",
                "dataset={\"kind\":\"pairing\",\"anchors\":5}",
                "lr=0.001",
            ])
            .unwrap();
        assert_eq!(c.decoder.width, 256);
        assert_eq!(c.method, Method::Ali);
        assert_eq!(c.objective.cycle_mode, CycleMode::ExplicitL1);
        assert_eq!(c.dataset, Dataset::Pairing { anchors: 5 });
        assert_eq!(c.lr, 1e-3);
        assert!(RunConfig::default().with_overrides(&["decoder.depth=3"]).is_err());
        assert!(RunConfig::default().with_overrides(&["epochs"]).is_err());
    }

    #[test]
    fn every_field_is_overridable() {
        let paths = RunConfig::field_paths();
        assert!(paths.contains(&"objective.lambda_map".to_string()));
        assert!(paths.contains(&"discriminator.layers".to_string()));
        assert!(paths.contains(&"g_updates".to_string()));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        c.d_updates = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.decoder.layers = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.dataset = Dataset::Pairing { anchors: 6 };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.lambda = f64::NAN;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn objective_presets() {
        let mut c = RunConfig::default();
        c.lambda = 0.0;
        assert_eq!(c.resolved_objective().lambda_cycle, 0.0);
        c.method = Method::Ali;
        assert_eq!(c.resolved_objective(), ObjectiveSpec::ali());
        c.method = Method::Alice;
        c.dataset = Dataset::Pairing { anchors: 5 };
        assert_eq!(c.resolved_objective().map_mode, MapMode::ExplicitL2);
        c.dataset = Dataset::Pairing { anchors: 0 };
        assert_eq!(c.resolved_objective().map_mode, MapMode::None);
        assert_eq!(Method::parse("alice-adversarial").unwrap(), Method::AliceAdversarial);
        assert!(Method::parse("gan").is_err());
    }
}
