//! Loss terms of the ALI family and their composition.
//!
//! A model in the family is the joint-matching term plus optional
//! conditional-entropy surrogates: a cycle term (explicit `ℓ_k` or
//! adversarial) on unpaired data and a mapping term (explicit or
//! conditional-adversarial) on a supervised subset. [`ObjectiveSpec`]
//! selects the combination and [`compose_objective`] evaluates it and
//! routes gradients: samplers minimize the weighted generator total, each
//! discriminator ascends only its own objective.

pub mod gradcheck;
mod terms;

pub use terms::{
    ali_loss, cycle_adversarial_loss, cycle_explicit_loss, gan_loss, map_adversarial_loss, map_explicit_loss,
    AdversarialLoss, GeneratorForm, MapTarget, PairAdversarial,
};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Gradients, Tape, Tensor, Var};
use crate::nets::{Activation, Bound, Discriminator, DiscriminatorRole, MapRole, MlpConfig, NetError, StochasticMap};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("explicit losses support k = 1 or 2, got {0}")]
    NormOrder(u32),
    #[error("paired set is empty")]
    EmptyPairs,
    #[error("objective needs the {0} discriminator, which is missing")]
    MissingNet(DiscSlot),
    #[error("invalid objective: {0}")]
    Spec(String),
    #[error("{0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CycleMode {
    #[default]
    None,
    ExplicitL1,
    ExplicitL2,
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sides {
    #[default]
    XOnly,
    ZOnly,
    Both,
}

impl Sides {
    fn x(self) -> bool {
        matches!(self, Sides::XOnly | Sides::Both)
    }

    fn z(self) -> bool {
        matches!(self, Sides::ZOnly | Sides::Both)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MapMode {
    #[default]
    None,
    /// `ℓ_k` regression on the paired targets, `k` from the spec.
    ExplicitL2,
    ExplicitCrossEntropy,
    AdversarialConditional,
}

/// Which supervised conditionals the mapping term constrains. `x-only`
/// trains the decoder on `z → x`, `z-only` the encoder on `x → z`.
pub type MapSides = Sides;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveSpec {
    pub use_ali: bool,
    pub cycle_mode: CycleMode,
    pub cycle_sides: Sides,
    pub map_mode: MapMode,
    pub map_sides: MapSides,
    pub lambda_cycle: f64,
    pub lambda_map: f64,
    pub feature_matching: bool,
    /// Norm order of the explicit mapping regression.
    pub k: u32,
    pub generator_form: GeneratorForm,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            use_ali: true,
            cycle_mode: CycleMode::None,
            cycle_sides: Sides::XOnly,
            map_mode: MapMode::None,
            map_sides: Sides::XOnly,
            lambda_cycle: 1.0,
            lambda_map: 1.0,
            feature_matching: false,
            k: 2,
            generator_form: GeneratorForm::NonSaturating,
        }
    }
}

impl ObjectiveSpec {
    pub fn ali() -> Self {
        Self::default()
    }

    /// ALI plus an explicit `ℓ2` cycle on x.
    pub fn alice(lambda: f64) -> Self {
        Self {
            cycle_mode: CycleMode::ExplicitL2,
            lambda_cycle: lambda,
            ..Self::default()
        }
    }

    /// ALI plus an adversarially learned cycle on x, with feature matching.
    pub fn alice_adversarial() -> Self {
        Self {
            cycle_mode: CycleMode::Adversarial,
            feature_matching: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !self.use_ali && self.cycle_mode == CycleMode::None && self.map_mode == MapMode::None {
            return Err(ObjectiveError::Spec("no term enabled".into()));
        }
        for (name, l) in [("lambda_cycle", self.lambda_cycle), ("lambda_map", self.lambda_map)] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(ObjectiveError::Spec(format!("{name} must be finite and >= 0, got {l}")));
            }
        }
        if self.map_mode == MapMode::ExplicitL2 && !matches!(self.k, 1 | 2) {
            return Err(ObjectiveError::NormOrder(self.k));
        }
        Ok(())
    }

    /// Discriminators this objective trains. Zero-weight terms train none.
    pub fn required_discriminators(&self) -> Vec<DiscSlot> {
        let mut out = Vec::new();
        if self.use_ali {
            out.push(DiscSlot::Joint);
        }
        if self.cycle_mode == CycleMode::Adversarial && self.lambda_cycle > 0.0 {
            if self.cycle_sides.x() {
                out.push(DiscSlot::CycleX);
            }
            if self.cycle_sides.z() {
                out.push(DiscSlot::CycleZ);
            }
        }
        if self.map_mode == MapMode::AdversarialConditional && self.lambda_map > 0.0 {
            if self.map_sides.x() {
                out.push(DiscSlot::MapX);
            }
            if self.map_sides.z() {
                out.push(DiscSlot::MapZ);
            }
        }
        out
    }
}

/// Named discriminator positions in a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscSlot {
    /// `f_ω(x, z)`.
    Joint,
    /// `f_η(x, x̂)`.
    CycleX,
    /// `f_η(z, ẑ)`.
    CycleZ,
    /// `f_χ(x, z)` judging decoder outputs.
    MapX,
    /// `f_χ(x, z)` judging encoder outputs.
    MapZ,
}

impl DiscSlot {
    pub fn name(self) -> &'static str {
        match self {
            DiscSlot::Joint => "joint",
            DiscSlot::CycleX => "cycle_x",
            DiscSlot::CycleZ => "cycle_z",
            DiscSlot::MapX => "map_x",
            DiscSlot::MapZ => "map_z",
        }
    }
}

impl std::fmt::Display for DiscSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Decoder, encoder and whatever discriminators the objective uses.
#[derive(Clone, Debug)]
pub struct AliceNets {
    pub decoder: StochasticMap,
    pub encoder: StochasticMap,
    pub discriminators: BTreeMap<DiscSlot, Discriminator>,
}

/// Widths and activations of every network of a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetLayout {
    pub x_dim: usize,
    pub z_dim: usize,
    /// Noise width appended to the sampler inputs; 0 gives deterministic maps.
    pub noise_dim: usize,
    pub decoder_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    /// Shared by every discriminator.
    pub discriminator_hidden: Vec<usize>,
    pub generator_activation: Activation,
    pub discriminator_activation: Activation,
}

impl AliceNets {
    /// Builds the samplers and every discriminator `spec` needs. Seeds are
    /// derived from `seed` per network.
    pub fn for_spec(spec: &ObjectiveSpec, layout: &NetLayout, seed: u64) -> Result<Self, ObjectiveError> {
        let sub = |i: u64| seed.wrapping_mul(7).wrapping_add(i);
        let map = |i: usize, hidden: &[usize], o: usize, s: u64| {
            MlpConfig::new(i, hidden.to_vec(), o, layout.generator_activation)
                .with_noise(layout.noise_dim)
                .with_seed(s)
        };
        let decoder = StochasticMap::new(map(layout.z_dim, &layout.decoder_hidden, layout.x_dim, sub(1)), MapRole::Decoder)?;
        let encoder = StochasticMap::new(map(layout.x_dim, &layout.encoder_hidden, layout.z_dim, sub(2)), MapRole::Encoder)?;
        let mut discriminators = BTreeMap::new();
        for (i, slot) in spec.required_discriminators().into_iter().enumerate() {
            let (width, role) = match slot {
                DiscSlot::Joint => (layout.x_dim + layout.z_dim, DiscriminatorRole::Joint),
                DiscSlot::CycleX => (2 * layout.x_dim, DiscriminatorRole::Cycle),
                DiscSlot::CycleZ => (2 * layout.z_dim, DiscriminatorRole::Cycle),
                DiscSlot::MapX | DiscSlot::MapZ => (layout.x_dim + layout.z_dim, DiscriminatorRole::Conditional),
            };
            let cfg = MlpConfig::new(width, layout.discriminator_hidden.clone(), 1, layout.discriminator_activation)
                .with_seed(sub(3 + i as u64));
            discriminators.insert(slot, Discriminator::new(cfg, role)?);
        }
        Ok(Self {
            decoder,
            encoder,
            discriminators,
        })
    }

    pub fn disc(&self, slot: DiscSlot) -> Result<&Discriminator, ObjectiveError> {
        self.discriminators.get(&slot).ok_or(ObjectiveError::MissingNet(slot))
    }

    pub fn clear_grads(&mut self) {
        self.decoder.mlp.clear_grads();
        self.encoder.mlp.clear_grads();
        for d in self.discriminators.values_mut() {
            d.mlp.clear_grads();
        }
    }
}

/// One minibatch: data `x`, prior draws `z`, and optionally a supervised
/// subset of aligned pairs.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub x: Tensor,
    pub z: Tensor,
    pub paired: Option<PairedBatch>,
}

#[derive(Clone, Debug)]
pub struct PairedBatch {
    pub x: Tensor,
    pub z: Tensor,
    /// Class labels of `x`, used by the cross-entropy mapping loss.
    pub labels: Option<Vec<usize>>,
}

/// Which players receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Discriminators,
    Generators,
    Both,
}

impl Phase {
    fn generators(self) -> bool {
        matches!(self, Phase::Generators | Phase::Both)
    }

    fn discriminators(self) -> bool {
        matches!(self, Phase::Discriminators | Phase::Both)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Weighted generator total. Explicit terms are skipped outside the
    /// generator phase and do not contribute then.
    pub generator_loss: f64,
    /// Each discriminator's objective, keyed by slot name.
    pub discriminator_objectives: BTreeMap<String, f64>,
    /// Unweighted value of every evaluated component.
    pub terms: BTreeMap<String, f64>,
    /// Largest absolute logit seen in this evaluation.
    pub peak_logit: f64,
}

impl LossReport {
    pub fn all_finite(&self) -> bool {
        self.generator_loss.is_finite()
            && self.discriminator_objectives.values().all(|v| v.is_finite())
            && self.terms.values().all(|v| v.is_finite())
            && self.peak_logit.is_finite()
    }
}

/// Tape-level handles of one composed evaluation, for inspection.
pub struct Composed {
    pub tape: Tape,
    pub generator_loss: Option<Var>,
    pub d_objectives: BTreeMap<DiscSlot, Var>,
    pub decoder: Bound,
    pub encoder: Bound,
    pub discs: BTreeMap<DiscSlot, Bound>,
    pub report: LossReport,
}

/// Builds every enabled term on a fresh tape without touching gradients.
pub fn build_objective(
    spec: &ObjectiveSpec,
    nets: &AliceNets,
    batch: &TrainBatch,
    rng: &mut impl Rng,
    phase: Phase,
) -> Result<Composed, ObjectiveError> {
    spec.validate()?;
    let wanted = spec.required_discriminators();
    for &slot in &wanted {
        nets.disc(slot)?;
    }
    let (rx, rz) = (batch.x.rows(), batch.z.rows());
    if rx != rz {
        return Err(ObjectiveError::Shape(format!("x batch has {rx} rows, z batch {rz}")));
    }

    let mut tape = Tape::new();
    let gen_train = phase.generators();
    let disc_train = phase.discriminators();
    let dec = nets.decoder.bind(&mut tape, gen_train);
    let enc = nets.encoder.bind(&mut tape, gen_train);
    let mut discs = BTreeMap::new();
    for &slot in &wanted {
        discs.insert(slot, nets.disc(slot)?.bind(&mut tape, disc_train));
    }

    let x = tape.constant(batch.x.clone());
    let z = tape.constant(batch.z.clone());
    let z_tilde = nets.encoder.sample(&mut tape, &enc, x, rng)?;
    let x_tilde = nets.decoder.sample(&mut tape, &dec, z, rng)?;

    let mut report = LossReport::default();
    let mut d_objectives = BTreeMap::new();
    let mut g_terms: Vec<(Var, f64)> = Vec::new();
    let form = spec.generator_form;

    if spec.use_ali {
        let d = nets.disc(DiscSlot::Joint)?;
        let (ali, peak) = ali_loss(&mut tape, d, &discs[&DiscSlot::Joint], x, z_tilde, x_tilde, z, form)?;
        report.peak_logit = report.peak_logit.max(peak);
        d_objectives.insert(DiscSlot::Joint, ali.d_objective);
        report.terms.insert("ali_d".into(), tape.scalar(ali.d_objective));
        report.terms.insert("ali_g".into(), tape.scalar(ali.g_loss));
        g_terms.push((ali.g_loss, 1.0));
    }

    // a zero weight removes the term, including its sampling
    if spec.cycle_mode != CycleMode::None && spec.lambda_cycle > 0.0 {
        let sides = [
            (spec.cycle_sides.x(), DiscSlot::CycleX, "cycle_x"),
            (spec.cycle_sides.z(), DiscSlot::CycleZ, "cycle_z"),
        ];
        for (on, slot, name) in sides {
            let explicit = spec.cycle_mode != CycleMode::Adversarial;
            if !on || (explicit && !gen_train) {
                continue;
            }
            // x → z̃ → x̂, or z → x̃ → ẑ
            let (orig, recon) = if slot == DiscSlot::CycleX {
                (x, nets.decoder.sample(&mut tape, &dec, z_tilde, rng)?)
            } else {
                (z, nets.encoder.sample(&mut tape, &enc, x_tilde, rng)?)
            };
            match spec.cycle_mode {
                CycleMode::ExplicitL1 | CycleMode::ExplicitL2 => {
                    let k = if spec.cycle_mode == CycleMode::ExplicitL1 { 1 } else { 2 };
                    let c = cycle_explicit_loss(&mut tape, orig, recon, k)?;
                    report.terms.insert(name.into(), tape.scalar(c));
                    g_terms.push((c, spec.lambda_cycle));
                }
                CycleMode::Adversarial => {
                    let d = nets.disc(slot)?;
                    let out = cycle_adversarial_loss(&mut tape, d, &discs[&slot], orig, recon, spec.feature_matching, form)?;
                    push_pair(&mut tape, &mut report, &mut d_objectives, &mut g_terms, slot, name, out, spec.lambda_cycle);
                }
                CycleMode::None => unreachable!(),
            }
        }
    }

    if spec.map_mode != MapMode::None && spec.lambda_map > 0.0 {
        let paired = batch.paired.as_ref().ok_or(ObjectiveError::EmptyPairs)?;
        if paired.x.rows() == 0 || paired.x.rows() != paired.z.rows() {
            return Err(ObjectiveError::EmptyPairs);
        }
        let px = tape.constant(paired.x.clone());
        let pz = tape.constant(paired.z.clone());
        let sides = [
            (spec.map_sides.x(), DiscSlot::MapX, "map_x"),
            (spec.map_sides.z(), DiscSlot::MapZ, "map_z"),
        ];
        for (on, slot, name) in sides {
            let adversarial = spec.map_mode == MapMode::AdversarialConditional;
            if !on || (!adversarial && !gen_train) {
                continue;
            }
            let (target, generated) = if slot == DiscSlot::MapX {
                (px, nets.decoder.sample(&mut tape, &dec, pz, rng)?)
            } else {
                (pz, nets.encoder.sample(&mut tape, &enc, px, rng)?)
            };
            match spec.map_mode {
                MapMode::ExplicitL2 => {
                    let m = map_explicit_loss(&mut tape, generated, MapTarget::Regression { target, k: spec.k })?;
                    report.terms.insert(name.into(), tape.scalar(m));
                    g_terms.push((m, spec.lambda_map));
                }
                MapMode::ExplicitCrossEntropy => {
                    let labels = paired
                        .labels
                        .clone()
                        .ok_or_else(|| ObjectiveError::Spec("cross-entropy mapping needs labels".into()))?;
                    let m = map_explicit_loss(&mut tape, generated, MapTarget::Categorical { labels })?;
                    report.terms.insert(name.into(), tape.scalar(m));
                    g_terms.push((m, spec.lambda_map));
                }
                MapMode::AdversarialConditional => {
                    let d = nets.disc(slot)?;
                    let out = if slot == DiscSlot::MapX {
                        map_adversarial_loss(&mut tape, d, &discs[&slot], px, pz, generated, form)?
                    } else {
                        // same (x, z) argument order, fake z from the encoder
                        let r = d.discriminate(&mut tape, &discs[&slot], px, pz)?;
                        let f = d.discriminate(&mut tape, &discs[&slot], px, generated)?;
                        let loss = gan_loss(&mut tape, r.logits, f.logits, form)?;
                        PairAdversarial {
                            loss,
                            feature_matching: None,
                            peak_logit: terms::max_abs(&tape, &[r.logits, f.logits]),
                        }
                    };
                    push_pair(&mut tape, &mut report, &mut d_objectives, &mut g_terms, slot, name, out, spec.lambda_map);
                }
                MapMode::None => unreachable!(),
            }
        }
    }

    let mut total: Option<Var> = None;
    for (v, w) in g_terms {
        if w == 0.0 {
            continue;
        }
        let term = if w == 1.0 { v } else { tape.scale(v, w)? };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    report.generator_loss = tape.scalar(total);
    let generator_loss = Some(total);
    for (slot, v) in &d_objectives {
        report.discriminator_objectives.insert(slot.name().into(), tape.scalar(*v));
    }

    Ok(Composed {
        tape,
        generator_loss,
        d_objectives,
        decoder: dec,
        encoder: enc,
        discs,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn push_pair(
    tape: &mut Tape,
    report: &mut LossReport,
    d_objectives: &mut BTreeMap<DiscSlot, Var>,
    g_terms: &mut Vec<(Var, f64)>,
    slot: DiscSlot,
    name: &str,
    out: PairAdversarial,
    lambda: f64,
) {
    report.peak_logit = report.peak_logit.max(out.peak_logit);
    d_objectives.insert(slot, out.loss.d_objective);
    report.terms.insert(format!("{name}_d"), tape.scalar(out.loss.d_objective));
    report.terms.insert(format!("{name}_g"), tape.scalar(out.loss.g_loss));
    g_terms.push((out.loss.g_loss, lambda));
    if let Some(fm) = out.feature_matching {
        report.terms.insert(format!("{name}_feature_matching"), tape.scalar(fm));
        g_terms.push((fm, lambda));
    }
}

/// Per-player gradients of one composed evaluation.
pub struct ComposedGradients {
    pub generators: Option<Gradients>,
    pub discriminators: BTreeMap<DiscSlot, Gradients>,
}

/// Backward sweeps for the players selected by `phase`: one for the
/// generator total, one per discriminator for `-d_objective`.
pub fn backward_composed(composed: &mut Composed, phase: Phase) -> Result<ComposedGradients, ObjectiveError> {
    let generators = match (phase.generators(), composed.generator_loss) {
        (true, Some(g)) => Some(composed.tape.backward(g)?),
        _ => None,
    };
    let mut discriminators = BTreeMap::new();
    if phase.discriminators() {
        for (&slot, &d) in &composed.d_objectives {
            let neg = composed.tape.neg(d)?;
            discriminators.insert(slot, composed.tape.backward(neg)?);
        }
    }
    Ok(ComposedGradients {
        generators,
        discriminators,
    })
}

/// Evaluates the objective and writes gradients into the parameter grad
/// slots of the players selected by `phase`. Samplers get gradients of
/// the weighted generator total; each discriminator gets the gradient of
/// its own negated objective and nothing else.
pub fn compose_objective(
    spec: &ObjectiveSpec,
    nets: &mut AliceNets,
    batch: &TrainBatch,
    rng: &mut impl Rng,
    phase: Phase,
) -> Result<LossReport, ObjectiveError> {
    let mut composed = build_objective(spec, nets, batch, rng, phase)?;
    let grads = backward_composed(&mut composed, phase)?;
    let tape = &composed.tape;
    if let Some(g) = &grads.generators {
        nets.decoder.mlp.accumulate_grads(tape, g, &composed.decoder)?;
        nets.encoder.mlp.accumulate_grads(tape, g, &composed.encoder)?;
    }
    for (slot, g) in &grads.discriminators {
        let bound = &composed.discs[slot];
        nets.discriminators
            .get_mut(slot)
            .ok_or(ObjectiveError::MissingNet(*slot))?
            .mlp
            .accumulate_grads(tape, g, bound)?;
    }
    Ok(composed.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn layout() -> NetLayout {
        NetLayout {
            x_dim: 2,
            z_dim: 2,
            noise_dim: 2,
            decoder_hidden: vec![8, 8],
            encoder_hidden: vec![8, 8],
            discriminator_hidden: vec![8, 8],
            generator_activation: Activation::Tanh,
            discriminator_activation: Activation::Relu,
        }
    }

    fn batch(rows: usize, seed: u64) -> TrainBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TrainBatch {
            x: crate::nets::gaussian_noise(rows, 2, &mut rng),
            z: crate::nets::gaussian_noise(rows, 2, &mut rng),
            paired: Some(PairedBatch {
                x: crate::nets::gaussian_noise(3, 2, &mut rng),
                z: crate::nets::gaussian_noise(3, 2, &mut rng),
                labels: Some(vec![0, 1, 4]),
            }),
        }
    }

    fn zero_discriminators(nets: &mut AliceNets) {
        for d in nets.discriminators.values_mut() {
            d.mlp = Mlp::zeros(d.mlp.config().clone()).unwrap();
        }
    }

    #[test]
    fn zero_logits_give_minus_two_ln_two() {
        let spec = ObjectiveSpec::alice_adversarial();
        let mut nets = AliceNets::for_spec(&spec, &layout(), 1).unwrap();
        zero_discriminators(&mut nets);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = build_objective(&spec, &nets, &batch(6, 2), &mut rng, Phase::Both).unwrap();
        for v in c.report.discriminator_objectives.values() {
            assert!((v + 2.0 * LN_2).abs() < 1e-12, "{v}");
        }
        assert_eq!(c.report.peak_logit, 0.0);
        // non-saturating ALI generator: 2 ln 2; cycle: ln 2 plus zero feature matching
        assert!((c.report.terms["ali_g"] - 2.0 * LN_2).abs() < 1e-12);
        assert!((c.report.terms["cycle_x_g"] - LN_2).abs() < 1e-12);
        assert_eq!(c.report.terms["cycle_x_feature_matching"], 0.0);
    }

    #[test]
    fn cycle_hand_example() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let xh = tape.constant(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let l2 = cycle_explicit_loss(&mut tape, x, xh, 2).unwrap();
        assert_eq!(tape.scalar(l2), 2.0);
        let xh = tape.constant(Tensor::matrix(1, 2, vec![1.0, -3.0]).unwrap());
        let l1 = cycle_explicit_loss(&mut tape, x, xh, 1).unwrap();
        assert_eq!(tape.scalar(l1), 4.0);
        assert!(matches!(cycle_explicit_loss(&mut tape, x, xh, 3), Err(ObjectiveError::NormOrder(3))));
    }

    #[test]
    fn uniform_cross_entropy_is_ln_classes() {
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::zeros(vec![3, 5]));
        let m = map_explicit_loss(&mut tape, g, MapTarget::Categorical { labels: vec![0, 2, 4] }).unwrap();
        assert!((tape.scalar(m) - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_pairs_rejected() {
        let mut tape = Tape::new();
        let g = tape.constant(Tensor::zeros(vec![0, 2]));
        let t = tape.constant(Tensor::zeros(vec![0, 2]));
        assert!(matches!(
            map_explicit_loss(&mut tape, g, MapTarget::Regression { target: t, k: 2 }),
            Err(ObjectiveError::EmptyPairs)
        ));
        let spec = ObjectiveSpec {
            map_mode: MapMode::ExplicitL2,
            ..ObjectiveSpec::alice(1.0)
        };
        let nets = AliceNets::for_spec(&spec, &layout(), 1).unwrap();
        let mut b = batch(4, 1);
        b.paired = None;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            build_objective(&spec, &nets, &b, &mut rng, Phase::Both),
            Err(ObjectiveError::EmptyPairs)
        ));
    }

    #[test]
    fn missing_discriminator_and_bad_spec() {
        let mut nets = AliceNets::for_spec(&ObjectiveSpec::ali(), &layout(), 1).unwrap();
        let spec = ObjectiveSpec::alice_adversarial();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = compose_objective(&spec, &mut nets, &batch(4, 1), &mut rng, Phase::Both).unwrap_err();
        assert!(matches!(err, ObjectiveError::MissingNet(DiscSlot::CycleX)));

        let bad = ObjectiveSpec {
            map_mode: MapMode::ExplicitL2,
            k: 3,
            ..ObjectiveSpec::ali()
        };
        assert!(matches!(bad.validate(), Err(ObjectiveError::NormOrder(3))));
        let none = ObjectiveSpec {
            use_ali: false,
            ..ObjectiveSpec::ali()
        };
        assert!(none.validate().is_err());
        assert!(ObjectiveSpec::alice(-1.0).validate().is_err());
    }

    #[test]
    fn gradient_routing_is_separated() {
        let spec = ObjectiveSpec {
            cycle_mode: CycleMode::Adversarial,
            cycle_sides: Sides::Both,
            map_mode: MapMode::AdversarialConditional,
            map_sides: Sides::Both,
            feature_matching: true,
            ..ObjectiveSpec::ali()
        };
        let nets = AliceNets::for_spec(&spec, &layout(), 3).unwrap();
        assert_eq!(nets.discriminators.len(), 5);
        let b = batch(5, 4);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = build_objective(&spec, &nets, &b, &mut rng, Phase::Generators).unwrap();
        let g = backward_composed(&mut c, Phase::Generators).unwrap();
        let gg = g.generators.unwrap();
        assert!(g.discriminators.is_empty());
        assert!(c.decoder.vars().iter().all(|&v| gg.touched(v)));
        assert!(c.encoder.vars().iter().all(|&v| gg.touched(v)));
        for bound in c.discs.values() {
            assert!(bound.vars().iter().all(|&v| !gg.touched(v)));
        }

        let mut c = build_objective(&spec, &nets, &b, &mut rng, Phase::Discriminators).unwrap();
        let g = backward_composed(&mut c, Phase::Discriminators).unwrap();
        assert!(g.generators.is_none());
        assert_eq!(g.discriminators.len(), 5);
        for (slot, grads) in &g.discriminators {
            for (other, bound) in &c.discs {
                let hit = bound.vars().iter().any(|&v| grads.touched(v));
                assert_eq!(hit, slot == other, "{slot} gradient reached {other}");
            }
            assert!(c.decoder.vars().iter().all(|&v| !grads.touched(v)));
            assert!(c.encoder.vars().iter().all(|&v| !grads.touched(v)));
        }
    }

    #[test]
    fn explicit_terms_skip_outside_generator_phase() {
        let spec = ObjectiveSpec::alice(1.0);
        let nets = AliceNets::for_spec(&spec, &layout(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = build_objective(&spec, &nets, &batch(4, 1), &mut rng, Phase::Discriminators).unwrap();
        assert!(!d.report.terms.contains_key("cycle_x"));
        let g = build_objective(&spec, &nets, &batch(4, 1), &mut rng, Phase::Generators).unwrap();
        assert!(g.report.terms["cycle_x"] > 0.0);
        let want = g.report.terms["ali_g"] + g.report.terms["cycle_x"];
        assert!((g.report.generator_loss - want).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_drops_cycle_from_total() {
        let spec = ObjectiveSpec::alice(0.0);
        let nets = AliceNets::for_spec(&spec, &layout(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = build_objective(&spec, &nets, &batch(4, 1), &mut rng, Phase::Generators).unwrap();
        assert_eq!(g.report.generator_loss, g.report.terms["ali_g"]);
        assert!(!g.report.terms.contains_key("cycle_x"));
        let ali = build_objective(&ObjectiveSpec::ali(), &nets, &batch(4, 1), &mut ChaCha8Rng::seed_from_u64(0), Phase::Generators).unwrap();
        assert_eq!(ali.report, g.report);
    }

    #[test]
    fn discriminator_step_ascends() {
        let spec = ObjectiveSpec::ali();
        let mut nets = AliceNets::for_spec(&spec, &layout(), 5).unwrap();
        let b = batch(32, 6);
        let before = compose_objective(&spec, &mut nets, &b, &mut ChaCha8Rng::seed_from_u64(9), Phase::Discriminators)
            .unwrap()
            .discriminator_objectives["joint"];
        let d = nets.discriminators.get_mut(&DiscSlot::Joint).unwrap();
        for p in d.mlp.params_mut() {
            // gradients are of -objective, so descend
            let g = p.grad().unwrap().to_vec();
            for (w, gi) in p.values_mut().iter_mut().zip(g) {
                *w -= 1e-3 * gi;
            }
        }
        nets.clear_grads();
        let after = compose_objective(&spec, &mut nets, &b, &mut ChaCha8Rng::seed_from_u64(9), Phase::Discriminators)
            .unwrap()
            .discriminator_objectives["joint"];
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn for_spec_is_seeded() {
        let spec = ObjectiveSpec::alice(1.0);
        let a = AliceNets::for_spec(&spec, &layout(), 11).unwrap();
        let b = AliceNets::for_spec(&spec, &layout(), 11).unwrap();
        assert_eq!(a.decoder.mlp, b.decoder.mlp);
        assert_ne!(a.decoder.mlp, a.encoder.mlp);
        assert_eq!((a.decoder.config().input_dim, a.decoder.config().noise_dim), (2, 2));
    }
}
