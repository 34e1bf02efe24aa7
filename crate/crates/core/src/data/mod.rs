//! Toy datasets: the 2-D Gaussian mixture, the isotropic prior, and the
//! sparsely paired 5-GMM ↔ 2-GMM translation task.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

pub const TRAIN_SIZE: usize = 2048;
pub const TEST_SIZE: usize = 1024;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid mixture: {0}")]
    Spec(String),
    #[error("need at least {min} points, got {got}")]
    Size { min: usize, got: usize },
    #[error("paired set: {0}")]
    Pairing(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub means: Vec<[f64; 2]>,
    pub std: f64,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl GmmSpec {
    /// Five components at the origin and `(±2, ±2)`, std 0.2, equal weights.
    pub fn five_component(seed: u64) -> Self {
        Self::uniform(vec![[0.0, 0.0], [2.0, 2.0], [-2.0, 2.0], [2.0, -2.0], [-2.0, -2.0]], 0.2, seed)
    }

    /// Latent side of the pairing task: `(1, 1)` and `(-1, -1)`, std 0.2.
    pub fn two_component(seed: u64) -> Self {
        Self::uniform(vec![[1.0, 1.0], [-1.0, -1.0]], 0.2, seed)
    }

    pub fn uniform(means: Vec<[f64; 2]>, std: f64, seed: u64) -> Self {
        let k = means.len();
        Self {
            weights: vec![1.0 / k as f64; k],
            means,
            std,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(DataError::Spec(format!("std must be > 0, got {}", self.std)));
        }
        if self.means.is_empty() || self.weights.len() != self.means.len() {
            return Err(DataError::Spec(format!(
                "{} means but {} weights",
                self.means.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(DataError::Spec("weights must be finite and >= 0".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Spec("weights must sum to 1".into()));
        }
        Ok(())
    }
}

/// Points with the index of the component each was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub points: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Points per component, for `k` components.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &l in &self.labels {
            if l < k {
                c[l] += 1;
            }
        }
        c
    }
}

/// `n` draws seeded by `spec.seed`.
pub fn sample_gmm(spec: &GmmSpec, n: usize) -> Result<LabeledBatch, DataError> {
    sample_gmm_with(spec, n, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// `n` draws from a caller-owned stream; `spec.seed` is ignored.
pub fn sample_gmm_with(spec: &GmmSpec, n: usize, rng: &mut impl Rng) -> Result<LabeledBatch, DataError> {
    spec.validate()?;
    if n == 0 {
        return Err(DataError::Size { min: 1, got: 0 });
    }
    let pick = WeightedIndex::new(&spec.weights).map_err(|e| DataError::Spec(e.to_string()))?;
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = pick.sample(rng);
        let m = spec.means[c];
        for d in m {
            let e: f64 = StandardNormal.sample(rng);
            values.push(d + spec.std * e);
        }
        labels.push(c);
    }
    Ok(LabeledBatch {
        points: Tensor::matrix(n, 2, values).expect("2n values"),
        labels,
    })
}

/// `n × dim` standard normal draws.
pub fn sample_prior(n: usize, dim: usize, seed: u64) -> Tensor {
    sample_prior_with(n, dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_prior_with(n: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    let v: Vec<f64> = (0..n * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(n, dim, v).expect("n * dim values")
}

/// Supervised subset of a dataset: aligned `x`/`z` rows plus the dataset
/// indices they stand for.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSet {
    pub x: Tensor,
    pub z: Tensor,
    pub mask: Vec<usize>,
}

impl PairedSet {
    pub fn new(x: Tensor, z: Tensor, mask: Vec<usize>, dataset_len: usize) -> Result<Self, DataError> {
        if x.rows() != z.rows() || x.rows() != mask.len() {
            return Err(DataError::Pairing(format!(
                "{} x rows, {} z rows, {} mask entries",
                x.rows(),
                z.rows(),
                mask.len()
            )));
        }
        if let Some(&bad) = mask.iter().find(|&&i| i >= dataset_len) {
            return Err(DataError::Pairing(format!("index {bad} outside dataset of {dataset_len}")));
        }
        Ok(Self { x, z, mask })
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// The first `n` pairs.
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Self {
            x: self.x.select_rows(&idx),
            z: self.z.select_rows(&idx),
            mask: self.mask[..idx.len()].to_vec(),
        }
    }
}

/// Anchor points of the pairing task; each is paired with its negation.
pub const PAIRING_ANCHORS: [[f64; 2]; 5] = [[0.0, 0.0], [1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];

#[derive(Clone, Debug)]
pub struct PairingToy {
    pub x: LabeledBatch,
    pub z: LabeledBatch,
    pub anchors: PairedSet,
}

/// 2048 draws of the 5-GMM in x and of the 2-GMM in z, with the five
/// sign-flipped anchors appended to the x set (so they are 5 of 2048).
pub fn build_pairing_toy(seed: u64) -> Result<PairingToy, DataError> {
    let n_anchor = PAIRING_ANCHORS.len();
    let mut x = sample_gmm(&GmmSpec::five_component(seed), TRAIN_SIZE - n_anchor)?;
    let z = sample_gmm(&GmmSpec::two_component(seed ^ 0x5a5a_5a5a), TRAIN_SIZE)?;
    let ax: Vec<f64> = PAIRING_ANCHORS.iter().flatten().copied().collect();
    // -0.0 normalizes to 0.0 so the origin pairs with itself bitwise
    let az: Vec<f64> = ax.iter().map(|v| if *v == 0.0 { 0.0 } else { -v }).collect();
    let start = x.len();
    let mut values = x.points.values().to_vec();
    values.extend(&ax);
    x.points = Tensor::matrix(TRAIN_SIZE, 2, values).expect("shape");
    // anchors carry the label of the nearest mixture mean
    let five = GmmSpec::five_component(0);
    x.labels.extend(PAIRING_ANCHORS.iter().map(|a| nearest(&five.means, *a)));
    let anchors = PairedSet::new(
        Tensor::matrix(n_anchor, 2, ax).expect("shape"),
        Tensor::matrix(n_anchor, 2, az).expect("shape"),
        (start..start + n_anchor).collect(),
        TRAIN_SIZE,
    )?;
    Ok(PairingToy { x, z, anchors })
}

fn nearest(means: &[[f64; 2]], p: [f64; 2]) -> usize {
    let d = |m: &[f64; 2]| (m[0] - p[0]).powi(2) + (m[1] - p[1]).powi(2);
    (0..means.len())
        .min_by(|&a, &b| d(&means[a]).total_cmp(&d(&means[b])))
        .unwrap_or(0)
}

/// Encodes `x1` and `x9` and returns `m` evenly spaced latent points from
/// `z1` to `z9`, endpoints included.
pub fn interpolation_path<E>(mut encode: E, x1: [f64; 2], x9: [f64; 2], m: usize) -> Result<Tensor, DataError>
where
    E: FnMut(&Tensor) -> Tensor,
{
    if m < 2 {
        return Err(DataError::Size { min: 2, got: m });
    }
    let ends = encode(&Tensor::matrix(2, 2, vec![x1[0], x1[1], x9[0], x9[1]]).expect("shape"));
    let dim = ends.cols();
    let (z1, z9) = (ends.row(0).to_vec(), ends.row(1).to_vec());
    let mut v = Vec::with_capacity(m * dim);
    for i in 0..m {
        let t = i as f64 / (m - 1) as f64;
        for d in 0..dim {
            v.push(if i == m - 1 { z9[d] } else { z1[d] + t * (z9[d] - z1[d]) });
        }
    }
    Ok(Tensor::matrix(m, dim, v).expect("shape"))
}

/// Default endpoints of the latent interpolation.
pub const INTERPOLATION_ENDS: ([f64; 2], [f64; 2]) = ([-2.2, -2.2], [2.2, 2.2]);

/// Writes `x,y,label` rows.
pub fn write_csv<W: std::io::Write>(out: W, batch: &LabeledBatch) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "label"])?;
    for (i, &l) in batch.labels.iter().enumerate() {
        let r = batch.points.row(i);
        w.write_record([r[0].to_string(), r[1].to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_mixture_sizes_and_labels() {
        let b = sample_gmm(&GmmSpec::five_component(1), TRAIN_SIZE).unwrap();
        assert_eq!(b.points.shape(), &[TRAIN_SIZE, 2]);
        assert!(b.labels.iter().all(|&l| l < 5));
        assert_eq!(b.counts(5).iter().sum::<usize>(), TRAIN_SIZE);
        let spec = GmmSpec::five_component(1);
        for (i, &l) in b.labels.iter().enumerate() {
            let r = b.points.row(i);
            let m = spec.means[l];
            assert!((r[0] - m[0]).abs() < 6.0 * 0.2 && (r[1] - m[1]).abs() < 6.0 * 0.2);
        }
    }

    #[test]
    fn component_mean_within_clt_bound() {
        let b = sample_gmm(&GmmSpec::five_component(7), 20_000).unwrap();
        let rows: Vec<usize> = (0..b.len()).filter(|&i| b.labels[i] == 1).collect();
        let n = rows.len() as f64;
        for d in 0..2 {
            let mean = rows.iter().map(|&i| b.points.row(i)[d]).sum::<f64>() / n;
            assert!((mean - 2.0).abs() < 3.0 * 0.2 / n.sqrt(), "{mean}");
        }
    }

    #[test]
    fn single_component_radius() {
        let spec = GmmSpec::uniform(vec![[0.0, 0.0]], 0.2, 3);
        let b = sample_gmm(&spec, 10_000).unwrap();
        let inside = (0..b.len())
            .filter(|&i| {
                let r = b.points.row(i);
                (r[0] * r[0] + r[1] * r[1]).sqrt() < 0.85
            })
            .count();
        assert!(inside as f64 / 10_000.0 >= 0.997);
    }

    #[test]
    fn prior_moments() {
        let z = sample_prior(10_000, 2, 5);
        let n = 10_000.0;
        let mut mean = [0.0; 2];
        for i in 0..10_000 {
            for d in 0..2 {
                mean[d] += z.row(i)[d] / n;
            }
        }
        for m in mean {
            assert!(m.abs() < 3.0 / n.sqrt());
        }
        let mut cov = [[0.0; 2]; 2];
        for i in 0..10_000 {
            let r = z.row(i);
            for a in 0..2 {
                for b in 0..2 {
                    cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a][b] - want).abs() < 0.1);
            }
        }
        assert_eq!(sample_prior(5, 2, 9), sample_prior(5, 2, 9));
    }

    #[test]
    fn reproducible() {
        let s = GmmSpec::five_component(42);
        assert_eq!(sample_gmm(&s, 100).unwrap(), sample_gmm(&s, 100).unwrap());
        assert_ne!(sample_gmm(&s, 100).unwrap(), sample_gmm(&s.with_seed(43), 100).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let mut s = GmmSpec::five_component(0);
        s.std = 0.0;
        assert!(sample_gmm(&s, 4).is_err());
        let mut s = GmmSpec::five_component(0);
        s.weights.pop();
        assert!(sample_gmm(&s, 4).is_err());
        assert!(sample_gmm(&GmmSpec::five_component(0), 0).is_err());
    }

    #[test]
    fn pairing_anchors() {
        let toy = build_pairing_toy(1).unwrap();
        assert_eq!(toy.x.len(), TRAIN_SIZE);
        assert_eq!(toy.z.len(), TRAIN_SIZE);
        assert_eq!(toy.anchors.len(), 5);
        assert_eq!(toy.anchors.x.row(1), &[1.0, 1.0]);
        assert_eq!(toy.anchors.z.row(1), &[-1.0, -1.0]);
        assert_eq!(toy.anchors.z.row(0), &[0.0, 0.0]);
        assert_eq!(toy.anchors.z.row(0)[0].to_bits(), 0.0f64.to_bits());
        for (k, &i) in toy.anchors.mask.iter().enumerate() {
            assert_eq!(toy.x.points.row(i), toy.anchors.x.row(k));
        }
        assert_eq!(toy.anchors.take(0).len(), 0);
    }

    #[test]
    fn paired_set_checks() {
        let t = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        assert!(PairedSet::new(t.clone(), t.clone(), vec![0, 5], 5).is_err());
        assert!(PairedSet::new(t.clone(), t.clone(), vec![0], 5).is_err());
        assert!(PairedSet::new(t.clone(), t, vec![0, 4], 5).is_ok());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let enc = |x: &Tensor| x.map(|v| 0.5 * v + 1.0);
        let (a, b) = INTERPOLATION_ENDS;
        let p = interpolation_path(enc, a, b, 9).unwrap();
        assert_eq!(p.rows(), 9);
        assert_eq!(p.row(0), enc(&Tensor::matrix(1, 2, a.to_vec()).unwrap()).row(0));
        assert_eq!(p.row(8), enc(&Tensor::matrix(1, 2, b.to_vec()).unwrap()).row(0));
        assert!((p.row(4)[0] - 1.0).abs() < 1e-15);
        assert!(interpolation_path(enc, a, b, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let b = sample_gmm(&GmmSpec::five_component(2), 3).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &b).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,label"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(&first[..2], b.points.row(0));
        assert_eq!(first[2] as usize, b.labels[0]);
    }
}
