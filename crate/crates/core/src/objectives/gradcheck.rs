//! Finite-difference checks of every loss term and composite objective
//! against tape gradients, over all parameters of all networks involved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_objective, gan_loss, AliceNets, CycleMode, GeneratorForm, MapMode, NetLayout, ObjectiveError, ObjectiveSpec,
    PairedBatch, Phase, Sides, TrainBatch,
};
use crate::autodiff::gradcheck::{finite_difference, relative_error};
use crate::autodiff::{Tape, Var};
use crate::nets::{gaussian_noise, Activation, Bound, Discriminator, DiscriminatorRole, MlpConfig};

const EPS: f64 = 1e-6;

/// Objective families covered by the checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermCase {
    /// Marginal GAN on x.
    Gan,
    /// Joint matching.
    Ali,
    /// Explicit `ℓ_k` cycle.
    CycleExplicit,
    /// Adversarial cycle with feature matching.
    CycleAdversarial,
    /// Explicit mapping on paired data.
    MapExplicit,
    /// Conditional adversarial mapping.
    MapAdversarial,
    /// Joint matching plus a cycle term.
    Alice,
    /// Joint matching plus a mapping term.
    AliceMap,
    /// Joint matching, cycle and mapping together.
    SemiSupervised,
}

impl TermCase {
    pub const ALL: [TermCase; 9] = [
        TermCase::Gan,
        TermCase::Ali,
        TermCase::CycleExplicit,
        TermCase::CycleAdversarial,
        TermCase::MapExplicit,
        TermCase::MapAdversarial,
        TermCase::Alice,
        TermCase::AliceMap,
        TermCase::SemiSupervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TermCase::Gan => "gan",
            TermCase::Ali => "ali",
            TermCase::CycleExplicit => "cycle-explicit",
            TermCase::CycleAdversarial => "cycle-adversarial",
            TermCase::MapExplicit => "map-explicit",
            TermCase::MapAdversarial => "map-adversarial",
            TermCase::Alice => "alice",
            TermCase::AliceMap => "alice-map",
            TermCase::SemiSupervised => "semi-supervised",
        }
    }

    /// Random objective of this family; `None` for the marginal GAN.
    fn spec(self, rng: &mut impl Rng) -> Option<ObjectiveSpec> {
        let sides = [Sides::XOnly, Sides::ZOnly, Sides::Both][rng.random_range(0..3)];
        let explicit_cycle = if rng.random_bool(0.5) { CycleMode::ExplicitL1 } else { CycleMode::ExplicitL2 };
        let explicit_map = if rng.random_bool(0.5) { MapMode::ExplicitL2 } else { MapMode::ExplicitCrossEntropy };
        let base = ObjectiveSpec {
            use_ali: false,
            cycle_sides: sides,
            map_sides: sides,
            lambda_cycle: rng.random_range(0.1..3.0),
            lambda_map: rng.random_range(0.1..3.0),
            feature_matching: rng.random_bool(0.5),
            k: rng.random_range(1..=2),
            generator_form: if rng.random_bool(0.5) {
                GeneratorForm::NonSaturating
            } else {
                GeneratorForm::Minimax
            },
            ..ObjectiveSpec::default()
        };
        let mut spec = match self {
            TermCase::Gan => return None,
            TermCase::Ali => ObjectiveSpec { use_ali: true, ..base },
            TermCase::CycleExplicit => ObjectiveSpec { cycle_mode: explicit_cycle, ..base },
            TermCase::CycleAdversarial => ObjectiveSpec {
                cycle_mode: CycleMode::Adversarial,
                feature_matching: true,
                ..base
            },
            TermCase::MapExplicit => ObjectiveSpec { map_mode: explicit_map, ..base },
            TermCase::MapAdversarial => ObjectiveSpec {
                map_mode: MapMode::AdversarialConditional,
                ..base
            },
            TermCase::Alice => ObjectiveSpec {
                use_ali: true,
                cycle_mode: if rng.random_bool(0.5) { explicit_cycle } else { CycleMode::Adversarial },
                ..base
            },
            TermCase::AliceMap => ObjectiveSpec {
                use_ali: true,
                map_mode: if rng.random_bool(0.5) { explicit_map } else { MapMode::AdversarialConditional },
                ..base
            },
            TermCase::SemiSupervised => ObjectiveSpec {
                use_ali: true,
                cycle_mode: if rng.random_bool(0.5) { explicit_cycle } else { CycleMode::Adversarial },
                map_mode: if rng.random_bool(0.5) { explicit_map } else { MapMode::AdversarialConditional },
                ..base
            },
        };
        // categorical targets are labels of x, read from decoder logits
        if spec.map_mode == MapMode::ExplicitCrossEntropy {
            spec.map_sides = Sides::XOnly;
        }
        Some(spec)
    }
}

/// One random problem: networks, data and the noise seed shared by every
/// evaluation so that sampling is a fixed function of the parameters.
struct Instance {
    spec: Option<ObjectiveSpec>,
    nets: AliceNets,
    batch: TrainBatch,
    noise_seed: u64,
}

impl Instance {
    fn random(case: TermCase, rng: &mut impl Rng) -> Result<Self, ObjectiveError> {
        let spec = case.spec(rng);
        let x_dim = rng.random_range(2..=3);
        let z_dim = rng.random_range(1..=3);
        let hidden = |rng: &mut dyn rand::RngCore| vec![rng.random_range(2..=4); rng.random_range(1..=2)];
        // smooth activations only; relu kinks break central differences
        let layout = NetLayout {
            x_dim,
            z_dim,
            noise_dim: rng.random_range(0..=2),
            decoder_hidden: hidden(rng),
            encoder_hidden: hidden(rng),
            discriminator_hidden: hidden(rng),
            generator_activation: Activation::Tanh,
            discriminator_activation: Activation::Tanh,
        };
        let seed = rng.random();
        let nets = match &spec {
            Some(s) => AliceNets::for_spec(s, &layout, seed)?,
            None => {
                let mut nets = AliceNets::for_spec(&ObjectiveSpec::ali(), &layout, seed)?;
                // the joint slot holds a marginal discriminator on x alone
                let cfg = MlpConfig::new(x_dim, layout.discriminator_hidden.clone(), 1, Activation::Tanh).with_seed(seed ^ 1);
                nets.discriminators.insert(super::DiscSlot::Joint, Discriminator::new(cfg, DiscriminatorRole::Joint)?);
                nets
            }
        };
        let rows = rng.random_range(2..=5);
        let pairs = rng.random_range(1..=3);
        let batch = TrainBatch {
            x: gaussian_noise(rows, x_dim, rng),
            z: gaussian_noise(rows, z_dim, rng),
            paired: Some(PairedBatch {
                x: gaussian_noise(pairs, x_dim, rng),
                z: gaussian_noise(pairs, z_dim, rng),
                labels: Some((0..pairs).map(|_| rng.random_range(0..x_dim)).collect()),
            }),
        };
        Ok(Self {
            spec,
            nets,
            batch,
            noise_seed: rng.random(),
        })
    }

    fn flat_params(nets: &AliceNets) -> Vec<f64> {
        let mut out = Vec::new();
        let mlps = [&nets.decoder.mlp, &nets.encoder.mlp]
            .into_iter()
            .chain(nets.discriminators.values().map(|d| &d.mlp));
        for m in mlps {
            for p in m.params() {
                out.extend_from_slice(p.values());
            }
        }
        out
    }

    fn with_params(&self, flat: &[f64]) -> AliceNets {
        let mut nets = self.nets.clone();
        let mut at = 0;
        let mlps = [&mut nets.decoder.mlp, &mut nets.encoder.mlp]
            .into_iter()
            .chain(nets.discriminators.values_mut().map(|d| &mut d.mlp));
        for m in mlps {
            for p in m.params_mut() {
                let n = p.len();
                p.values_mut().copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        nets
    }

    /// Scalar outputs (generator total first, then each discriminator
    /// objective) and the bindings in flat-parameter order.
    fn evaluate(&self, nets: &AliceNets) -> Result<(Tape, Vec<Var>, Vec<Bound>), ObjectiveError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        match &self.spec {
            Some(spec) => {
                let c = build_objective(spec, nets, &self.batch, &mut rng, Phase::Both)?;
                let mut outputs: Vec<Var> = c.generator_loss.into_iter().collect();
                outputs.extend(c.d_objectives.values().copied());
                let mut bounds = vec![c.decoder, c.encoder];
                bounds.extend(c.discs.into_values());
                Ok((c.tape, outputs, bounds))
            }
            None => {
                let mut tape = Tape::new();
                let dec = nets.decoder.bind(&mut tape, true);
                let enc = nets.encoder.bind(&mut tape, true);
                let disc = nets.disc(super::DiscSlot::Joint)?;
                let db = disc.bind(&mut tape, true);
                let x = tape.constant(self.batch.x.clone());
                let z = tape.constant(self.batch.z.clone());
                let x_fake = nets.decoder.sample(&mut tape, &dec, z, &mut rng)?;
                let real = disc.mlp.forward(&mut tape, &db, x)?.output;
                let fake = disc.mlp.forward(&mut tape, &db, x_fake)?.output;
                let form = if self.noise_seed % 2 == 0 {
                    GeneratorForm::NonSaturating
                } else {
                    GeneratorForm::Minimax
                };
                let loss = gan_loss(&mut tape, real, fake, form)?;
                Ok((tape, vec![loss.g_loss, loss.d_objective], vec![dec, enc, db]))
            }
        }
    }

    fn max_error(&self) -> Result<f64, ObjectiveError> {
        let base = Self::flat_params(&self.nets);
        let (tape, outputs, bounds) = self.evaluate(&self.nets)?;
        let mut worst = 0.0_f64;
        for (i, &out) in outputs.iter().enumerate() {
            let grads = tape.backward(out)?;
            let analytic: Vec<f64> = bounds
                .iter()
                .flat_map(|b| b.vars().iter())
                .flat_map(|&v| grads.get_or_zeros(v, &tape))
                .collect();
            let mut failure = None;
            let numeric = finite_difference(&base, EPS, |p| match self.evaluate(&self.with_params(p)) {
                Ok((t, o, _)) => t.scalar(o[i]),
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        Ok(worst)
    }
}

/// Largest relative gradient error of `case` over `instances` random
/// problems drawn from `seed`.
pub fn max_gradient_error(case: TermCase, instances: usize, seed: u64) -> Result<f64, ObjectiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let inst = Instance::random(case, &mut rng)?;
        worst = worst.max(inst.max_error()?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_matches_differences() {
        for case in TermCase::ALL {
            let err = max_gradient_error(case, 5, 11).unwrap();
            assert!(err < 1e-6, "{}: {err}", case.name());
        }
    }

    #[test]
    fn perturbation_reaches_every_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = Instance::random(TermCase::SemiSupervised, &mut rng).unwrap();
        let flat = Instance::flat_params(&inst.nets);
        assert_eq!(Instance::flat_params(&inst.with_params(&flat)), flat);
        let (_, _, bounds) = inst.evaluate(&inst.nets).unwrap();
        let bound_len: usize = bounds.iter().map(|b| b.vars().len()).sum();
        let param_len: usize = [&inst.nets.decoder.mlp, &inst.nets.encoder.mlp]
            .into_iter()
            .chain(inst.nets.discriminators.values().map(|d| &d.mlp))
            .map(|m| m.params().len())
            .sum();
        assert_eq!(bound_len, param_len);
    }
}
