//! Sample-quality and reconstruction metrics for the toy mixture.

mod classifier;
mod kmeans;

pub use classifier::{shared_classifier, ClassifierConfig, ToyClassifier, MIN_ACCURACY};
pub use kmeans::{cluster_purity, kmeans, Purity};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::nets::{NetError, StochasticMap};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("classifier is not validated (accuracy {0:?}, need >= {MIN_ACCURACY})")]
    Unvalidated(Option<f64>),
    #[error("no samples to score")]
    Empty,
    #[error("{0} labels for {1} points")]
    Labels(usize, usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
}

/// Direction of the KL inside the score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcpForm {
    /// `exp(E_x KL(p(y|x) ‖ p(y)))`, bounded by the class count.
    #[default]
    Standard,
    /// `E_x KL(p(y) ‖ p(y|x))`, unexponentiated.
    AsWritten,
}

/// Score of one set of class-probability rows.
pub fn icp_from_probs(probs: &[Vec<f64>], form: IcpForm) -> Result<f64, MetricError> {
    let n = probs.len();
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let k = probs[0].len();
    let mut py = vec![0.0; k];
    for p in probs {
        for (m, v) in py.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let kl = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| x * (x / y.max(f64::MIN_POSITIVE)).ln())
            .sum()
    };
    let mean_kl = probs
        .iter()
        .map(|p| match form {
            IcpForm::Standard => kl(p, &py),
            IcpForm::AsWritten => kl(&py, p),
        })
        .sum::<f64>()
        / n as f64;
    Ok(match form {
        IcpForm::Standard => mean_kl.exp(),
        IcpForm::AsWritten => mean_kl,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Icp {
    pub value: f64,
    /// Standard deviation over bootstrap resamples of the sample set.
    pub std: f64,
}

/// Scores `samples` under a validated classifier, with a seeded bootstrap
/// std over `resamples` draws (0 skips it).
pub fn icp_score(
    samples: &Tensor,
    classifier: &ToyClassifier,
    form: IcpForm,
    resamples: usize,
    seed: u64,
) -> Result<Icp, MetricError> {
    classifier.require_validated()?;
    let probs = classifier.probabilities(samples)?;
    let value = icp_from_probs(&probs, form)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let pick: Vec<Vec<f64>> = (0..probs.len())
            .map(|_| probs[rng.random_range(0..probs.len())].clone())
            .collect();
        draws.push(icp_from_probs(&pick, form)?);
    }
    Ok(Icp {
        value,
        std: std_dev(&draws),
    })
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean over rows of `‖x - x̂‖²`.
pub fn mse(x: &Tensor, x_hat: &Tensor) -> Result<f64, MetricError> {
    if x.shape() != x_hat.shape() {
        return Err(MetricError::Labels(x_hat.rows(), x.rows()));
    }
    if x.rows() == 0 {
        return Err(MetricError::Empty);
    }
    let sq: f64 = x.values().iter().zip(x_hat.values()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sq / x.rows() as f64)
}

/// Cycle error `x → z̃ → x̂` averaged over `draws` independent noise draws.
pub fn reconstruction_mse(
    encoder: &StochasticMap,
    decoder: &StochasticMap,
    x: &Tensor,
    draws: usize,
    rng: &mut impl Rng,
) -> Result<f64, MetricError> {
    let draws = draws.max(1);
    let mut total = 0.0;
    for _ in 0..draws {
        let z = encoder.sample_values(x, rng)?;
        let x_hat = decoder.sample_values(&z, rng)?;
        total += mse(x, &x_hat)?;
    }
    Ok(total / draws as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub icp: f64,
    pub icp_std: f64,
    pub mse: f64,
    pub purity: f64,
    pub purity_degenerate: bool,
    /// Generated samples per predicted class.
    pub counts: Vec<usize>,
}

impl EvalReport {
    pub fn is_finite(&self) -> bool {
        self.icp.is_finite() && self.icp_std.is_finite() && self.mse.is_finite() && self.purity.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub form: IcpForm,
    pub bootstrap: usize,
    pub mse_draws: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            form: IcpForm::Standard,
            bootstrap: 20,
            mse_draws: 1,
            seed: 0,
        }
    }
}

/// Scores a trained pair of samplers on a labeled test set: ICP of decoder
/// samples from the prior, cycle MSE, and purity of the encodings.
pub fn evaluate(
    encoder: &StochasticMap,
    decoder: &StochasticMap,
    test: &crate::data::LabeledBatch,
    classifier: &ToyClassifier,
    opts: EvalOptions,
) -> Result<EvalReport, MetricError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = test.len();
    let z = crate::data::sample_prior_with(n, decoder.config().input_dim, &mut rng);
    let samples = decoder.sample_values(&z, &mut rng)?;
    evaluate_samples(encoder, decoder, &samples, test, classifier, opts, &mut rng)
}

/// As [`evaluate`], with the generated `samples` supplied by the caller.
pub fn evaluate_samples(
    encoder: &StochasticMap,
    decoder: &StochasticMap,
    samples: &Tensor,
    test: &crate::data::LabeledBatch,
    classifier: &ToyClassifier,
    opts: EvalOptions,
    rng: &mut impl Rng,
) -> Result<EvalReport, MetricError> {
    let icp = icp_score(samples, classifier, opts.form, opts.bootstrap, opts.seed ^ 0x1c9)?;
    let mse = reconstruction_mse(encoder, decoder, &test.points, opts.mse_draws, rng)?;
    let codes = encoder.sample_values(&test.points, rng)?;
    let purity = cluster_purity(&codes, &test.labels, classifier.classes(), opts.seed)?;
    let mut counts = vec![0; classifier.classes()];
    for c in classifier.predict(samples)? {
        counts[c] += 1;
    }
    Ok(EvalReport {
        icp: icp.value,
        icp_std: icp.std,
        mse,
        purity: purity.purity,
        purity_degenerate: purity.degenerate,
        counts,
    })
}
