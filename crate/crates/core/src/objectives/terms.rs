//! Individual loss terms as differentiable tape expressions.
//!
//! Every adversarial term returns the discriminator objective (to be
//! maximized, always `<= 0`) and the matching generator loss (to be
//! minimized) built on the same logits.

use serde::{Deserialize, Serialize};

use super::ObjectiveError;
use crate::autodiff::{Tape, Var};
use crate::nets::{Bound, Discriminator};

/// How generators are scored against a discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorForm {
    /// Generators minimize `-log σ` of the logits they want called real.
    #[default]
    NonSaturating,
    /// Generators minimize the discriminator objective itself.
    Minimax,
}

#[derive(Clone, Copy, Debug)]
pub struct AdversarialLoss {
    /// `mean log σ(real) + mean log(1 - σ(fake))`.
    pub d_objective: Var,
    pub g_loss: Var,
}

/// `log σ` / `log(1 - σ)` half of a discriminator objective.
fn d_objective(tape: &mut Tape, real: Var, fake: Var) -> Result<Var, ObjectiveError> {
    let lr = tape.log_sigmoid(real)?;
    let lr = tape.mean(lr)?;
    let lf = tape.log_one_minus_sigmoid(fake)?;
    let lf = tape.mean(lf)?;
    Ok(tape.add(lr, lf)?)
}

/// `mean[-log σ(t)]` when `want_real`, else `mean[-log(1 - σ(t))]`.
fn fool(tape: &mut Tape, logits: Var, want_real: bool) -> Result<Var, ObjectiveError> {
    let y = if want_real { 1.0 } else { 0.0 };
    Ok(tape.sigmoid_xent(logits, y)?)
}

fn check_aligned(tape: &Tape, a: Var, b: Var) -> Result<(), ObjectiveError> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(ObjectiveError::Shape(format!("logit shapes {sa:?} and {sb:?} differ")));
    }
    Ok(())
}

/// Marginal GAN objective on precomputed logits.
pub fn gan_loss(tape: &mut Tape, real: Var, fake: Var, form: GeneratorForm) -> Result<AdversarialLoss, ObjectiveError> {
    check_aligned(tape, real, fake)?;
    let d = d_objective(tape, real, fake)?;
    let g = match form {
        GeneratorForm::NonSaturating => fool(tape, fake, true)?,
        GeneratorForm::Minimax => {
            let lf = tape.log_one_minus_sigmoid(fake)?;
            tape.mean(lf)?
        }
    };
    Ok(AdversarialLoss { d_objective: d, g_loss: g })
}

/// Joint-matching objective: encoder pairs `(x, z̃)` are "real", decoder
/// pairs `(x̃, z)` are "fake". Both samplers are trained against it, so
/// the non-saturating form swaps labels on both sides.
#[allow(clippy::too_many_arguments)]
pub fn ali_loss(
    tape: &mut Tape,
    disc: &Discriminator,
    bound: &Bound,
    x: Var,
    z_tilde: Var,
    x_tilde: Var,
    z: Var,
    form: GeneratorForm,
) -> Result<(AdversarialLoss, f64), ObjectiveError> {
    let real = disc.discriminate(tape, bound, x, z_tilde)?.logits;
    let fake = disc.discriminate(tape, bound, x_tilde, z)?.logits;
    let d = d_objective(tape, real, fake)?;
    let g = match form {
        GeneratorForm::NonSaturating => {
            let a = fool(tape, real, false)?;
            let b = fool(tape, fake, true)?;
            tape.add(a, b)?
        }
        GeneratorForm::Minimax => d,
    };
    let peak = max_abs(tape, &[real, fake]);
    Ok((AdversarialLoss { d_objective: d, g_loss: g }, peak))
}

/// Mean over the batch of `‖x - x̂‖_k^k`, `k ∈ {1, 2}`.
pub fn cycle_explicit_loss(tape: &mut Tape, x: Var, x_hat: Var, k: u32) -> Result<Var, ObjectiveError> {
    lk_loss(tape, x, x_hat, k)
}

pub(crate) fn lk_loss(tape: &mut Tape, target: Var, pred: Var, k: u32) -> Result<Var, ObjectiveError> {
    let diff = tape.sub(target, pred)?;
    let per = match k {
        1 => tape.abs(diff)?,
        2 => tape.square(diff)?,
        _ => return Err(ObjectiveError::NormOrder(k)),
    };
    let rows = tape.sum_cols(per)?;
    Ok(tape.mean(rows)?)
}

/// Adversarial output of the cycle and conditional-map terms, with the
/// optional feature-matching penalty on the generator side.
#[derive(Clone, Copy, Debug)]
pub struct PairAdversarial {
    pub loss: AdversarialLoss,
    pub feature_matching: Option<Var>,
    pub peak_logit: f64,
}

/// `f_η(x, x)` is real, `f_η(x, x̂)` is fake.
pub fn cycle_adversarial_loss(
    tape: &mut Tape,
    disc: &Discriminator,
    bound: &Bound,
    x: Var,
    x_hat: Var,
    feature_matching: bool,
    form: GeneratorForm,
) -> Result<PairAdversarial, ObjectiveError> {
    pair_adversarial(tape, disc, bound, (x, x), (x, x_hat), feature_matching, form)
}

/// `f_χ(x, z)` on supervised pairs is real, `f_χ(x̂, z)` is fake.
pub fn map_adversarial_loss(
    tape: &mut Tape,
    disc: &Discriminator,
    bound: &Bound,
    x: Var,
    z: Var,
    x_hat: Var,
    form: GeneratorForm,
) -> Result<PairAdversarial, ObjectiveError> {
    if tape.value(x).rows() == 0 {
        return Err(ObjectiveError::EmptyPairs);
    }
    pair_adversarial(tape, disc, bound, (x, z), (x_hat, z), false, form)
}

fn pair_adversarial(
    tape: &mut Tape,
    disc: &Discriminator,
    bound: &Bound,
    real: (Var, Var),
    fake: (Var, Var),
    feature_matching: bool,
    form: GeneratorForm,
) -> Result<PairAdversarial, ObjectiveError> {
    let r = disc.discriminate(tape, bound, real.0, real.1)?;
    let f = disc.discriminate(tape, bound, fake.0, fake.1)?;
    let loss = gan_loss(tape, r.logits, f.logits, form)?;
    let fm = if feature_matching {
        let mr = tape.mean_rows(r.features)?;
        let mf = tape.mean_rows(f.features)?;
        let d = tape.sub(mr, mf)?;
        let sq = tape.square(d)?;
        Some(tape.sum(sq)?)
    } else {
        None
    };
    Ok(PairAdversarial {
        loss,
        feature_matching: fm,
        peak_logit: max_abs(tape, &[r.logits, f.logits]),
    })
}

/// Supervised target for the explicit mapping term.
#[derive(Clone, Debug)]
pub enum MapTarget {
    /// Continuous paired targets, `ℓ_k` regression.
    Regression { target: Var, k: u32 },
    /// Categorical paired targets; the generated output is read as logits.
    Categorical { labels: Vec<usize> },
}

/// Negative log-likelihood surrogate of the paired conditional, minimized.
pub fn map_explicit_loss(tape: &mut Tape, generated: Var, target: MapTarget) -> Result<Var, ObjectiveError> {
    if tape.value(generated).rows() == 0 {
        return Err(ObjectiveError::EmptyPairs);
    }
    match target {
        MapTarget::Regression { target, k } => lk_loss(tape, target, generated, k),
        MapTarget::Categorical { labels } => Ok(tape.softmax_xent(generated, labels)?),
    }
}

pub(crate) fn max_abs(tape: &Tape, vars: &[Var]) -> f64 {
    vars.iter()
        .flat_map(|&v| tape.value(v).values().iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}
