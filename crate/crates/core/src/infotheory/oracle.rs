//! Brute-force checks and random instance generators for the closed forms in
//! the parent module.

use rand::Rng;
use serde::Serialize;

use super::{cycle_bound_gap, pointwise_optimal_discriminator, DiscreteJoint, InfoError};

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search until the
/// bracket is narrower than `tol`.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// `a log t + b log(1 - t)` maximized numerically on `(0, 1)`.
///
/// The objective is flat to `~1e-16` within `1e-8` of its peak, so the search
/// runs on `-|d/dt|`, which is unimodal with a kink at the same point.
pub fn numerical_optimal_discriminator(a: f64, b: f64) -> f64 {
    let slope = |t: f64| -(a / t - b / (1.0 - t)).abs();
    golden_section_max(slope, 1e-15, 1.0 - 1e-15, 1e-13)
}

/// Random joint with sides in `1..=max_side`; about a quarter of the entries
/// are zeroed to exercise the `0 · log 0` convention.
pub fn random_joint<R: Rng>(rng: &mut R, max_side: usize) -> DiscreteJoint {
    loop {
        let nx = rng.random_range(1..=max_side);
        let nz = rng.random_range(1..=max_side);
        let w: Vec<f64> = (0..nx * nz)
            .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
            .collect();
        if let Ok(j) = DiscreteJoint::from_weights(nx, nz, w) {
            return j;
        }
    }
}

/// Random `p(x|z)` table for an `nx × nz` joint with strictly positive
/// entries.
pub fn random_conditional<R: Rng>(rng: &mut R, nx: usize, nz: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; nz]; nx];
    for z in 0..nz {
        let w: Vec<f64> = (0..nx).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = w.iter().sum();
        for x in 0..nx {
            t[x][z] = w[x] / s;
        }
    }
    t
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub instances: usize,
    /// Largest `|VI - (H(x,z) - MI)|`.
    pub joint_form_error: f64,
    /// Largest `|VI - (H(x) + H(z) - 2 MI)|`.
    pub marginal_form_error: f64,
}

impl IdentityCheck {
    pub fn max_error(&self) -> f64 {
        self.joint_form_error.max(self.marginal_form_error)
    }
}

/// Variation of information from its definition against both closed forms.
pub fn check_information_identities<R: Rng>(rng: &mut R, instances: usize, max_side: usize) -> IdentityCheck {
    let mut out = IdentityCheck {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let j = random_joint(rng, max_side);
        let (vi, mi) = (j.variation_of_information(), j.mutual_information());
        out.joint_form_error = out.joint_form_error.max((vi - (j.joint_entropy() - mi)).abs());
        out.marginal_form_error = out.marginal_form_error.max((vi - (j.entropy_x() + j.entropy_z() - 2.0 * mi)).abs());
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BoundCheck {
    pub instances: usize,
    pub min_gap: f64,
    /// Largest `|gap - E KL|`.
    pub max_identity_error: f64,
    /// Largest gap when the model conditional equals `q(x|z)`.
    pub max_matched_gap: f64,
    /// Instances whose conditionals differ by more than `1e-9` on the
    /// support of `q(z)` yet show no positive gap.
    pub false_equalities: usize,
}

/// Randomized check of `bound ≥ H_q(x|z)`, `gap = E KL`, and zero gap at
/// matched conditionals.
pub fn check_cycle_bound<R: Rng>(rng: &mut R, instances: usize, max_side: usize) -> Result<BoundCheck, InfoError> {
    let mut out = BoundCheck {
        instances,
        min_gap: f64::INFINITY,
        ..Default::default()
    };
    for _ in 0..instances {
        let q = random_joint(rng, max_side);
        let p = random_conditional(rng, q.nx(), q.nz());
        let b = cycle_bound_gap(&q, &p)?;
        out.min_gap = out.min_gap.min(b.gap);
        if max_conditional_diff(&q, &p) > 1e-9 && b.gap <= 0.0 {
            out.false_equalities += 1;
        }
        out.max_identity_error = out.max_identity_error.max((b.gap - b.expected_kl).abs());
        // columns with zero q(z) carry no weight; fill them uniformly
        let mut matched = q.conditional_x_given_z();
        let qz = q.marginal_z();
        for z in 0..q.nz() {
            if qz[z] == 0.0 {
                for row in matched.iter_mut() {
                    row[z] = 1.0 / q.nx() as f64;
                }
            }
        }
        let m = cycle_bound_gap(&q, &matched)?;
        out.max_matched_gap = out.max_matched_gap.max(m.gap.abs());
    }
    Ok(out)
}

fn max_conditional_diff(q: &DiscreteJoint, p: &[Vec<f64>]) -> f64 {
    let qc = q.conditional_x_given_z();
    let qz = q.marginal_z();
    let mut worst = 0.0_f64;
    for z in (0..q.nz()).filter(|&z| qz[z] > 0.0) {
        for x in 0..q.nx() {
            worst = worst.max((qc[x][z] - p[x][z]).abs());
        }
    }
    worst
}

/// Conditional discriminator optimum on a finite support, found cell by cell
/// by maximizing `π(x|z) log t + p(x|z) log(1 - t)` numerically.
pub fn numerical_conditional_discriminator(pi_cond: &[Vec<f64>], p_cond: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pi_cond
        .iter()
        .zip(p_cond)
        .map(|(pr, qr)| pr.iter().zip(qr).map(|(&a, &b)| numerical_optimal_discriminator(a, b)).collect())
        .collect()
}

/// Largest disagreement between the closed-form and numerical discriminator
/// optimum over `instances` random `(a, b)` in `(0, 1]²`.
pub fn check_pointwise_optimum<R: Rng>(rng: &mut R, instances: usize) -> Result<f64, InfoError> {
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let a = 1.0 - rng.random::<f64>();
        let b = 1.0 - rng.random::<f64>();
        let closed = pointwise_optimal_discriminator(a, b)?;
        worst = worst.max((closed - numerical_optimal_discriminator(a, b)).abs());
    }
    Ok(worst)
}
