use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::autodiff::{log_sum_exp, Adam, AdamConfig, Tape, Tensor};
use crate::data::{sample_gmm, GmmSpec, LabeledBatch, TEST_SIZE, TRAIN_SIZE};
use crate::nets::{load_checkpoint, save_checkpoint, Activation, Mlp, MlpConfig, NetError};

/// Validation accuracy a classifier needs before it may score samples.
pub const MIN_ACCURACY: f64 = 0.995;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub target_loss: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-2,
            target_loss: 1e-3,
            max_steps: 5000,
            seed: 0,
        }
    }
}

/// Offline label classifier used to score generated samples.
#[derive(Clone, Debug)]
pub struct ToyClassifier {
    mlp: Mlp,
    /// Final full-batch training loss.
    pub train_loss: Option<f64>,
    pub steps: usize,
    /// Accuracy on held-out labeled data; `None` until validated.
    pub accuracy: Option<f64>,
}

impl ToyClassifier {
    /// Full-batch Adam on softmax cross-entropy until the training loss
    /// drops below `target_loss` or `max_steps` is reached.
    pub fn train(data: &LabeledBatch, classes: usize, cfg: &ClassifierConfig) -> Result<Self, MetricError> {
        if data.labels.len() != data.points.rows() {
            return Err(MetricError::Labels(data.labels.len(), data.points.rows()));
        }
        let mut mlp = Mlp::new(
            MlpConfig::new(data.points.cols(), cfg.hidden.clone(), classes, Activation::Relu).with_seed(cfg.seed),
        )?;
        let mut adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            beta1: 0.9,
            ..AdamConfig::default()
        });
        let mut loss = f64::INFINITY;
        let mut steps = 0;
        while steps < cfg.max_steps {
            let mut tape = Tape::new();
            let bound = mlp.bind(&mut tape, true);
            let x = tape.constant(data.points.clone());
            let out = mlp.forward(&mut tape, &bound, x)?.output;
            let l = tape.softmax_xent(out, data.labels.clone())?;
            loss = tape.scalar(l);
            if loss < cfg.target_loss {
                break;
            }
            let g = tape.backward(l)?;
            mlp.accumulate_grads(&tape, &g, &bound)?;
            adam.step(mlp.params_mut())?;
            steps += 1;
        }
        Ok(Self {
            mlp,
            train_loss: Some(loss),
            steps,
            accuracy: None,
        })
    }

    pub fn from_mlp(mlp: Mlp) -> Self {
        Self {
            mlp,
            train_loss: None,
            steps: 0,
            accuracy: None,
        }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn classes(&self) -> usize {
        self.mlp.config().output_dim
    }

    /// Records accuracy on `data`; returns it.
    pub fn validate(&mut self, data: &LabeledBatch) -> Result<f64, MetricError> {
        let pred = self.predict(&data.points)?;
        if pred.len() != data.labels.len() {
            return Err(MetricError::Labels(data.labels.len(), pred.len()));
        }
        let hits = pred.iter().zip(&data.labels).filter(|(a, b)| a == b).count();
        let acc = hits as f64 / pred.len().max(1) as f64;
        self.accuracy = Some(acc);
        Ok(acc)
    }

    pub fn is_validated(&self) -> bool {
        self.accuracy.is_some_and(|a| a >= MIN_ACCURACY)
    }

    pub(crate) fn require_validated(&self) -> Result<(), MetricError> {
        if self.is_validated() {
            Ok(())
        } else {
            Err(MetricError::Unvalidated(self.accuracy))
        }
    }

    /// Softmax rows.
    pub fn probabilities(&self, x: &Tensor) -> Result<Vec<Vec<f64>>, MetricError> {
        let logits = self.mlp.eval(x)?;
        Ok((0..logits.rows())
            .map(|i| {
                let r = logits.row(i);
                let lse = log_sum_exp(r);
                r.iter().map(|v| (v - lse).exp()).collect()
            })
            .collect())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>, MetricError> {
        let logits = self.mlp.eval(x)?;
        Ok((0..logits.rows())
            .map(|i| {
                let r = logits.row(i);
                (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap_or(0)
            })
            .collect())
    }

    /// Weights only, in the network checkpoint format.
    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        save_checkpoint(path, &self.mlp)
    }

    /// Loads weights; the result must be validated again before use.
    pub fn load(path: &Path) -> Result<Self, NetError> {
        Ok(Self::from_mlp(load_checkpoint(path)?))
    }

    /// Trains on 2048 draws of the five-component mixture and validates on
    /// 1024 independent draws.
    pub fn for_mixture(seed: u64) -> Result<Self, MetricError> {
        let train = sample_gmm(&GmmSpec::five_component(seed), TRAIN_SIZE)?;
        let test = sample_gmm(&GmmSpec::five_component(seed.wrapping_add(1)), TEST_SIZE)?;
        let mut c = Self::train(
            &train,
            5,
            &ClassifierConfig {
                seed,
                ..ClassifierConfig::default()
            },
        )?;
        c.validate(&test)?;
        Ok(c)
    }
}

/// Process-wide mixture classifier per seed, trained on first use.
pub fn shared_classifier(seed: u64) -> Result<Arc<ToyClassifier>, MetricError> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ToyClassifier>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
    if let Some(c) = guard.get(&seed) {
        return Ok(Arc::clone(c));
    }
    let c = Arc::new(ToyClassifier::for_mixture(seed)?);
    guard.insert(seed, Arc::clone(&c));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{icp_score, IcpForm};

    #[test]
    fn mixture_classifier_validates() {
        let c = shared_classifier(0).unwrap();
        assert!(c.train_loss.unwrap() < 1e-3, "{:?} after {}", c.train_loss, c.steps);
        assert!(c.is_validated(), "{:?}", c.accuracy);
        let probs = c.probabilities(&Tensor::matrix(1, 2, vec![2.0, 2.0]).unwrap()).unwrap();
        assert!((probs[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(c.predict(&Tensor::matrix(1, 2, vec![-2.0, -2.0]).unwrap()).unwrap(), vec![4]);
    }

    #[test]
    fn unvalidated_classifier_rejected() {
        let c = ToyClassifier::from_mlp(Mlp::new(MlpConfig::new(2, vec![4], 5, Activation::Relu)).unwrap());
        let x = Tensor::zeros(vec![3, 2]);
        assert!(matches!(
            icp_score(&x, &c, IcpForm::Standard, 0, 0),
            Err(MetricError::Unvalidated(None))
        ));
    }

    #[test]
    fn checkpoint_round_trip_requires_revalidation() {
        let c = shared_classifier(0).unwrap();
        let dir = std::env::temp_dir().join(format!("alice-clf-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("clf.json");
        c.save(&path).unwrap();
        let mut back = ToyClassifier::load(&path).unwrap();
        assert!(!back.is_validated());
        let test = sample_gmm(&GmmSpec::five_component(1), TEST_SIZE).unwrap();
        assert_eq!(back.validate(&test).unwrap(), c.accuracy.unwrap());
        std::fs::remove_dir_all(dir).ok();
    }
}
