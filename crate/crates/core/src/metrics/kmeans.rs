use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::autodiff::Tensor;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's algorithm from a seeded k-means++ start. Returns one cluster
/// index per row.
pub fn kmeans(points: &Tensor, k: usize, seed: u64, max_iter: usize) -> Vec<usize> {
    let n = points.rows();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points.row(rng.random_range(0..n)).to_vec()];
    while centers.len() < k {
        let d: Vec<f64> = (0..n)
            .map(|i| centers.iter().map(|c| dist2(points.row(i), c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            // fewer distinct points than clusters
            centers.push(centers[0].clone());
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, di) in d.iter().enumerate() {
            if u < *di {
                pick = i;
                break;
            }
            u -= di;
        }
        centers.push(points.row(pick).to_vec());
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let r = points.row(i);
            let best = (0..k)
                .min_by(|&p, &q| dist2(r, &centers[p]).total_cmp(&dist2(r, &centers[q])))
                .unwrap_or(0);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points.cols();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    assign
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Purity {
    pub purity: f64,
    /// All encodings coincide, so clusters carry no information.
    pub degenerate: bool,
}

/// Fraction of points whose k-means cluster's majority label is their own.
pub fn cluster_purity(codes: &Tensor, labels: &[usize], k: usize, seed: u64) -> Result<Purity, MetricError> {
    let n = codes.rows();
    if labels.len() != n {
        return Err(MetricError::Labels(labels.len(), n));
    }
    if n == 0 {
        return Err(MetricError::Empty);
    }
    let first = codes.row(0);
    let degenerate = (1..n).all(|i| dist2(codes.row(i), first) < 1e-24);
    let assign = kmeans(codes, k, seed, 100);
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut table = vec![vec![0usize; classes]; k.max(1)];
    for (&a, &l) in assign.iter().zip(labels) {
        table[a][l] += 1;
    }
    let hits: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(Purity {
        purity: hits as f64 / n as f64,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn separated_codes_are_pure() {
        let labels: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let v: Vec<f64> = labels.iter().flat_map(|&l| [10.0 * l as f64, -3.0 * l as f64]).collect();
        let codes = Tensor::matrix(50, 2, v).unwrap();
        let p = cluster_purity(&codes, &labels, 5, 1).unwrap();
        assert_eq!(p.purity, 1.0);
        assert!(!p.degenerate);
        let renamed: Vec<usize> = labels.iter().map(|l| (l + 3) % 5).collect();
        assert_eq!(cluster_purity(&codes, &renamed, 5, 1).unwrap().purity, 1.0);
    }

    #[test]
    fn random_codes_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1000;
        let v: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 5).collect();
        let p = cluster_purity(&Tensor::matrix(n, 2, v).unwrap(), &labels, 5, 3).unwrap();
        assert!((0.2..=0.35).contains(&p.purity), "{}", p.purity);
    }

    #[test]
    fn degenerate_codes_flagged() {
        let codes = Tensor::matrix(10, 2, vec![1.5; 20]).unwrap();
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let p = cluster_purity(&codes, &labels, 5, 0).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.purity, 0.5);
        assert!(cluster_purity(&codes, &labels[..3], 5, 0).is_err());
    }
}
