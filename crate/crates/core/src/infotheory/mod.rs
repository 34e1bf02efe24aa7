//! Exact information measures on finite joint tables.
//!
//! All logarithms are natural (nats) and `0 · log 0 = 0`. A
//! [`DiscreteJoint`] is an `nx × nz` table `p[x][z]`; "x given z" means the
//! columns are conditioned on.

pub mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total mass of a joint table.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum InfoError {
    #[error("joint table is empty or ragged")]
    Shape,
    #[error("entry ({0}, {1}) is negative or not finite")]
    Entry(usize, usize),
    #[error("joint mass is {0}, expected 1")]
    Mass(f64),
    #[error("delta must lie in [0, 1], got {0}")]
    Delta(f64),
    #[error("column {0} of the conditional table does not sum to 1")]
    Conditional(usize),
    #[error("conditional table is {got:?}, joint is {want:?}")]
    ConditionalShape { want: (usize, usize), got: (usize, usize) },
    #[error("weights must be nonnegative with a positive sum")]
    Weights,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `H(x | z)`.
    XGivenZ,
    /// `H(z | x)`.
    ZGivenX,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    nx: usize,
    nz: usize,
    /// Row-major, `p[x * nz + z]`.
    p: Vec<f64>,
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

fn entropy(dist: impl IntoIterator<Item = f64>) -> f64 {
    -dist.into_iter().map(plogp).sum::<f64>()
}

impl DiscreteJoint {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, InfoError> {
        let nx = rows.len();
        let nz = rows.first().map_or(0, Vec::len);
        if nx == 0 || nz == 0 || rows.iter().any(|r| r.len() != nz) {
            return Err(InfoError::Shape);
        }
        let p: Vec<f64> = rows.into_iter().flatten().collect();
        let j = Self { nx, nz, p };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        for (i, &v) in self.p.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(InfoError::Entry(i / self.nz, i % self.nz));
            }
        }
        let mass: f64 = self.p.iter().sum();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(InfoError::Mass(mass));
        }
        Ok(())
    }

    /// Normalizes nonnegative weights into a joint.
    pub fn from_weights(nx: usize, nz: usize, weights: Vec<f64>) -> Result<Self, InfoError> {
        if nx == 0 || nz == 0 || weights.len() != nx * nz {
            return Err(InfoError::Shape);
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(InfoError::Weights);
        }
        let j = Self {
            nx,
            nz,
            p: weights.into_iter().map(|w| w / total).collect(),
        };
        j.validate()?;
        Ok(j)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.p[x * self.nz + z]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.nz).map(<[f64]>::to_vec).collect()
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.p.chunks(self.nz).map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_z(&self) -> Vec<f64> {
        (0..self.nz).map(|z| (0..self.nx).map(|x| self.get(x, z)).sum()).collect()
    }

    /// `p(x | z)` as an `nx × nz` table; columns with zero mass are left at 0.
    pub fn conditional_x_given_z(&self) -> Vec<Vec<f64>> {
        let pz = self.marginal_z();
        (0..self.nx)
            .map(|x| {
                (0..self.nz)
                    .map(|z| if pz[z] > 0.0 { self.get(x, z) / pz[z] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn entropy_x(&self) -> f64 {
        entropy(self.marginal_x())
    }

    pub fn entropy_z(&self) -> f64 {
        entropy(self.marginal_z())
    }

    pub fn joint_entropy(&self) -> f64 {
        entropy(self.p.iter().copied())
    }

    /// `-Σ p(x,z) log p(x|z)` (or `p(z|x)`), evaluated term by term.
    pub fn conditional_entropy(&self, dir: Direction) -> f64 {
        let (px, pz) = (self.marginal_x(), self.marginal_z());
        let mut h = 0.0;
        for x in 0..self.nx {
            for z in 0..self.nz {
                let pj = self.get(x, z);
                if pj > 0.0 {
                    let cond = match dir {
                        Direction::XGivenZ => pj / pz[z],
                        Direction::ZGivenX => pj / px[x],
                    };
                    h -= pj * cond.ln();
                }
            }
        }
        h
    }

    /// `Σ p log [p / (p_x p_z)]`.
    pub fn mutual_information(&self) -> f64 {
        let (px, pz) = (self.marginal_x(), self.marginal_z());
        let mut mi = 0.0;
        for x in 0..self.nx {
            for z in 0..self.nz {
                let pj = self.get(x, z);
                if pj > 0.0 {
                    mi += pj * (pj / (px[x] * pz[z])).ln();
                }
            }
        }
        mi
    }

    /// `H(x|z) + H(z|x)`.
    pub fn variation_of_information(&self) -> f64 {
        self.conditional_entropy(Direction::XGivenZ) + self.conditional_entropy(Direction::ZGivenX)
    }
}

/// One member of the 2×2 family `[[δ/2, (1-δ)/2], [(1-δ)/2, δ/2]]`, all
/// with uniform marginals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaFamily {
    delta: f64,
}

impl DeltaFamily {
    pub fn new(delta: f64) -> Result<Self, InfoError> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(InfoError::Delta(delta));
        }
        Ok(Self { delta })
    }

    pub fn delta(self) -> f64 {
        self.delta
    }

    pub fn joint(self) -> DiscreteJoint {
        let (a, b) = (self.delta / 2.0, (1.0 - self.delta) / 2.0);
        DiscreteJoint {
            nx: 2,
            nz: 2,
            p: vec![a, b, b, a],
        }
    }
}

pub fn delta_joint(delta: f64) -> Result<DiscreteJoint, InfoError> {
    Ok(DeltaFamily::new(delta)?.joint())
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -(plogp(p) + plogp(1.0 - p))
}

/// Whether `j` has marginals `qx` over x and `pz` over z, i.e. is one of the
/// saddle points of the joint-matching objective for those marginals.
pub fn ali_saddle_check(j: &DiscreteJoint, qx: &[f64], pz: &[f64]) -> bool {
    let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= MASS_TOL);
    close(&j.marginal_x(), qx) && close(&j.marginal_z(), pz)
}

/// `argmax_t a log t + b log(1 - t) = a / (a + b)`: the pointwise optimal
/// discriminator output given real density `a` and fake density `b`.
pub fn pointwise_optimal_discriminator(a: f64, b: f64) -> Result<f64, InfoError> {
    if !(a >= 0.0 && b >= 0.0 && a + b > 0.0 && (a + b).is_finite()) {
        return Err(InfoError::Weights);
    }
    Ok(a / (a + b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleBound {
    /// `-E_q[log p(x|z)]`.
    pub bound: f64,
    /// `H_q(x|z)`.
    pub entropy: f64,
    /// `bound - entropy`.
    pub gap: f64,
    /// `E_{q(z)} KL(q(x|z) ‖ p(x|z))`, computed directly.
    pub expected_kl: f64,
}

/// Cross-entropy bound of the conditional entropy of `q` under model
/// conditionals `p_cond[x][z] = p(x|z)`.
pub fn cycle_bound_gap(q: &DiscreteJoint, p_cond: &[Vec<f64>]) -> Result<CycleBound, InfoError> {
    q.validate()?;
    let got = (p_cond.len(), p_cond.first().map_or(0, Vec::len));
    if got != (q.nx, q.nz) || p_cond.iter().any(|r| r.len() != q.nz) {
        return Err(InfoError::ConditionalShape {
            want: (q.nx, q.nz),
            got,
        });
    }
    for z in 0..q.nz {
        let col: f64 = (0..q.nx).map(|x| p_cond[x][z]).sum();
        if (col - 1.0).abs() > 1e-9 || (0..q.nx).any(|x| !(p_cond[x][z] >= 0.0)) {
            return Err(InfoError::Conditional(z));
        }
    }
    let qz = q.marginal_z();
    let mut bound = 0.0;
    let mut expected_kl = 0.0;
    for x in 0..q.nx {
        for z in 0..q.nz {
            let qj = q.get(x, z);
            if qj > 0.0 {
                let p = p_cond[x][z];
                bound -= qj * p.ln();
                let qc = qj / qz[z];
                expected_kl += qz[z] * qc * (qc / p).ln();
            }
        }
    }
    let entropy = q.conditional_entropy(Direction::XGivenZ);
    Ok(CycleBound {
        bound,
        entropy,
        gap: bound - entropy,
        expected_kl,
    })
}

/// One row of the δ-family sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub h_x_given_z: f64,
    pub h_z_given_x: f64,
    pub mi: f64,
    pub vi: f64,
    pub marginal_x: [f64; 2],
    pub marginal_z: [f64; 2],
}

/// Evaluates the δ-family at `steps + 1` evenly spaced points of `[lo, hi]`.
pub fn delta_sweep(lo: f64, hi: f64, steps: usize) -> Result<Vec<DeltaRow>, InfoError> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            // exact endpoints; interior points as i / steps
            let delta = if i == steps { hi } else { lo + (hi - lo) * i as f64 / steps as f64 };
            let j = delta_joint(delta)?;
            let (mx, mz) = (j.marginal_x(), j.marginal_z());
            Ok(DeltaRow {
                delta,
                h_x_given_z: j.conditional_entropy(Direction::XGivenZ),
                h_z_given_x: j.conditional_entropy(Direction::ZGivenX),
                mi: j.mutual_information(),
                vi: j.variation_of_information(),
                marginal_x: [mx[0], mx[1]],
                marginal_z: [mz[0], mz[1]],
            })
        })
        .collect()
}

/// CSV with header `delta,h_x_given_z,h_z_given_x,mi,vi,px0,px1,pz0,pz1`.
pub fn delta_csv(rows: &[DeltaRow]) -> String {
    let mut out = String::from("delta,h_x_given_z,h_z_given_x,mi,vi,px0,px1,pz0,pz1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{}\n",
            r.delta,
            r.h_x_given_z,
            r.h_z_given_x,
            r.mi,
            r.vi,
            r.marginal_x[0],
            r.marginal_x[1],
            r.marginal_z[0],
            r.marginal_z[1]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn independent_uniform() {
        let j = DiscreteJoint::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        assert!((j.conditional_entropy(Direction::XGivenZ) - LN_2).abs() < 1e-15);
        assert!(j.mutual_information().abs() < 1e-15);
    }

    #[test]
    fn diagonal_table() {
        let j = delta_joint(1.0).unwrap();
        assert_eq!(j.rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert_eq!(j.conditional_entropy(Direction::XGivenZ), 0.0);
        assert!((j.mutual_information() - LN_2).abs() < 1e-15);
        assert_eq!(j.variation_of_information(), 0.0);
        assert_eq!(delta_joint(0.0).unwrap().rows(), vec![vec![0.0, 0.5], vec![0.5, 0.0]]);
        assert!(delta_joint(0.5).unwrap().rows().iter().flatten().all(|&v| v == 0.25));
    }

    #[test]
    fn delta_point_three() {
        let j = delta_joint(0.3).unwrap();
        let want = -(0.3f64 * 0.3f64.ln() + 0.7 * 0.7f64.ln());
        assert!((j.conditional_entropy(Direction::XGivenZ) - want).abs() < 1e-12);
        assert!((want - 0.6109).abs() < 1e-4);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert_eq!(delta_joint(1.5), Err(InfoError::Delta(1.5)));
        assert!(matches!(DiscreteJoint::new(vec![vec![0.5, 0.6]]), Err(InfoError::Mass(_))));
        assert!(matches!(DiscreteJoint::new(vec![vec![1.5, -0.5]]), Err(InfoError::Entry(0, 1))));
        assert_eq!(DiscreteJoint::new(vec![vec![1.0], vec![]]), Err(InfoError::Shape));
        assert!(pointwise_optimal_discriminator(0.0, 0.0).is_err());
    }

    #[test]
    fn saddle_membership() {
        let u = [0.5, 0.5];
        for i in 0..=10 {
            assert!(ali_saddle_check(&delta_joint(i as f64 / 10.0).unwrap(), &u, &u));
        }
        let j = DiscreteJoint::new(vec![vec![0.6, 0.0], vec![0.0, 0.4]]).unwrap();
        assert!(!ali_saddle_check(&j, &u, &u));
    }

    #[test]
    fn pointwise_optimum() {
        assert_eq!(pointwise_optimal_discriminator(2.0, 2.0).unwrap(), 0.5);
        assert_eq!(pointwise_optimal_discriminator(1.0, 3.0).unwrap(), 0.25);
    }

    #[test]
    fn cycle_bound_examples() {
        let q = delta_joint(1.0).unwrap();
        let uniform = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let b = cycle_bound_gap(&q, &uniform).unwrap();
        assert!((b.bound - LN_2).abs() < 1e-15);
        assert_eq!(b.entropy, 0.0);
        assert!((b.gap - LN_2).abs() < 1e-15);

        let q = delta_joint(0.3).unwrap();
        let matched = q.conditional_x_given_z();
        let b = cycle_bound_gap(&q, &matched).unwrap();
        assert!(b.gap.abs() < 1e-15);
    }

    #[test]
    fn cycle_bound_rejects_bad_conditionals() {
        let q = delta_joint(0.3).unwrap();
        assert!(matches!(
            cycle_bound_gap(&q, &[vec![0.5, 0.5], vec![0.6, 0.5]]),
            Err(InfoError::Conditional(0))
        ));
        assert!(matches!(
            cycle_bound_gap(&q, &[vec![1.0, 1.0]]),
            Err(InfoError::ConditionalShape { .. })
        ));
    }

    #[test]
    fn sweep_endpoints_exact() {
        let rows = delta_sweep(0.0, 1.0, 10).unwrap();
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0].delta, 0.0);
        assert_eq!(rows[10].delta, 1.0);
        assert_eq!(rows[0].h_x_given_z, 0.0);
        assert_eq!(rows[10].h_z_given_x, 0.0);
        let csv = delta_csv(&rows);
        assert!(csv.starts_with("delta,h_x_given_z,h_z_given_x,mi,vi,px0,px1,pz0,pz1\n"));
        assert_eq!(csv.lines().count(), 12);
    }
}
