use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Dataset, Method, RunConfig};
use super::HarnessError;
use crate::autodiff::{Adam, Tape, Tensor};
use crate::data::{build_pairing_toy, sample_gmm, sample_prior_with, GmmSpec, LabeledBatch, TEST_SIZE, TRAIN_SIZE};
use crate::metrics::{evaluate, shared_classifier, EvalOptions, EvalReport, ToyClassifier};
use crate::nets::{dae_forward, Mlp, StochasticMap};
use crate::objectives::{
    compose_objective, cycle_explicit_loss, AliceNets, DiscSlot, LossReport, PairedBatch, Phase, TrainBatch,
};

/// Seed offsets separating the random streams of one run.
/// Mixed into the data seed for the held-out test draw.
pub const TEST_SALT: u64 = 0x7e57_0000;
const TRAIN_SALT: u64 = 0x7a11_0000;
const EVAL_SALT: u64 = 0xe7a1_0000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Status {
    Completed,
    Diverged { epoch: usize, reason: String },
    /// The run raised an error or panicked; siblings are unaffected.
    Failed { error: String },
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Completed => "completed",
            Status::Diverged { .. } => "diverged",
            Status::Failed { .. } => "failed",
        }
    }
}

/// Means over one epoch's minibatches.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub generator_loss: f64,
    pub discriminator: BTreeMap<String, f64>,
    pub terms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingEval {
    /// Held-out x from the `(2, 2)` and `(-2, -2)` components whose
    /// encoding lands on the opposite-sign side of the z mixture.
    pub accuracy: f64,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    pub config: RunConfig,
    pub status: Status,
    pub curves: Vec<EpochStats>,
    pub eval: Option<EvalReport>,
    pub pairing: Option<PairingEval>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn icp(&self) -> Option<f64> {
        self.eval.as_ref().map(|e| e.icp)
    }

    pub fn mse(&self) -> Option<f64> {
        self.eval.as_ref().map(|e| e.mse)
    }

    /// Record for a run that never produced a model.
    pub fn failed(cfg: &RunConfig, error: String) -> Self {
        Self {
            config_hash: cfg.hash(),
            method: cfg.method,
            seed: cfg.seed,
            config: cfg.clone(),
            status: Status::Failed { error },
            curves: Vec::new(),
            eval: None,
            pairing: None,
            wall_time_s: 0.0,
        }
    }
}

/// Trained networks of one run.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub nets: AliceNets,
}

impl TrainedModel {
    pub fn is_finite(&self) -> bool {
        let fin = |m: &Mlp| m.params().iter().all(|t| t.values().iter().all(|v| v.is_finite()));
        fin(&self.nets.decoder.mlp)
            && fin(&self.nets.encoder.mlp)
            && self.nets.discriminators.values().all(|d| fin(&d.mlp))
    }
}

struct Data {
    train: LabeledBatch,
    test: LabeledBatch,
    z_pool: Option<Tensor>,
    paired: Option<PairedBatch>,
}

fn load_data(cfg: &RunConfig) -> Result<Data, HarnessError> {
    let test = sample_gmm(&GmmSpec::five_component(cfg.data_seed ^ TEST_SALT), TEST_SIZE)?;
    match cfg.dataset {
        Dataset::Gmm => Ok(Data {
            train: sample_gmm(&GmmSpec::five_component(cfg.data_seed), TRAIN_SIZE)?,
            test,
            z_pool: None,
            paired: None,
        }),
        Dataset::Pairing { anchors } => {
            let toy = build_pairing_toy(cfg.data_seed)?;
            let a = toy.anchors.take(anchors);
            Ok(Data {
                train: toy.x,
                test,
                z_pool: Some(toy.z.points),
                paired: (!a.is_empty()).then(|| PairedBatch {
                    x: a.x,
                    z: a.z,
                    labels: None,
                }),
            })
        }
    }
}

/// Builds untrained networks for `cfg`.
pub fn init_model(cfg: &RunConfig) -> Result<TrainedModel, HarnessError> {
    let mut layout = cfg.layout();
    if cfg.method == Method::Dae {
        // corruption is applied to the input, the maps themselves are deterministic
        layout.noise_dim = 0;
    }
    let spec = if cfg.method == Method::Dae {
        crate::objectives::ObjectiveSpec {
            use_ali: false,
            cycle_mode: crate::objectives::CycleMode::ExplicitL2,
            ..Default::default()
        }
    } else {
        cfg.resolved_objective()
    };
    Ok(TrainedModel {
        nets: AliceNets::for_spec(&spec, &layout, cfg.seed)?,
    })
}

/// Trains one run and evaluates it. Divergence ends training early with a
/// `diverged` status; only invalid configurations are errors.
pub fn train(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    train_model(cfg).map(|(_, r)| r)
}

/// As [`train`], also returning the networks.
pub fn train_model(cfg: &RunConfig) -> Result<(TrainedModel, RunRecord), HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let data = load_data(cfg)?;
    let mut model = init_model(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_SALT);
    let spec = cfg.resolved_objective();

    let mut opt_dec = Adam::new(cfg.adam());
    let mut opt_enc = Adam::new(cfg.adam());
    let mut opt_disc: BTreeMap<DiscSlot, Adam> = model.nets.discriminators.keys().map(|&s| (s, Adam::new(cfg.adam()))).collect();

    let n = data.train.len();
    let bs = cfg.batch_size.max(1);
    let batches = n / bs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut curves = Vec::with_capacity(cfg.epochs);
    let mut status = Status::Completed;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = Accumulator::default();
        for b in 0..batches {
            let idx = &order[b * bs..(b + 1) * bs];
            let x = data.train.points.select_rows(idx);
            let z = match &data.z_pool {
                None => sample_prior_with(bs, 2, &mut rng),
                Some(pool) => {
                    let pick: Vec<usize> = (0..bs).map(|_| rng.random_range(0..pool.rows())).collect();
                    pool.select_rows(&pick)
                }
            };
            let batch = TrainBatch {
                x,
                z,
                paired: data.paired.clone(),
            };

            if cfg.method == Method::Dae {
                let loss = dae_step(&mut model.nets, &batch.x, cfg.dae_noise_std, &mut rng, &mut opt_enc, &mut opt_dec)?;
                if !loss.is_finite() {
                    status = Status::Diverged {
                        epoch,
                        reason: format!("non-finite reconstruction loss {loss}"),
                    };
                    break 'epochs;
                }
                acc.add(&LossReport {
                    generator_loss: loss,
                    ..Default::default()
                });
                continue;
            }

            for _ in 0..cfg.d_updates {
                let r = compose_objective(&spec, &mut model.nets, &batch, &mut rng, Phase::Discriminators)?;
                if let Some(reason) = diverged(&r, cfg.divergence_logit) {
                    status = Status::Diverged { epoch, reason };
                    break 'epochs;
                }
                for (slot, opt) in opt_disc.iter_mut() {
                    let d = model.nets.discriminators.get_mut(slot).expect("slot exists");
                    opt.step(d.mlp.params_mut())?;
                }
                acc.add_d(&r);
            }
            for _ in 0..cfg.g_updates {
                let r = compose_objective(&spec, &mut model.nets, &batch, &mut rng, Phase::Generators)?;
                if let Some(reason) = diverged(&r, cfg.divergence_logit) {
                    status = Status::Diverged { epoch, reason };
                    break 'epochs;
                }
                opt_dec.step(model.nets.decoder.mlp.params_mut())?;
                opt_enc.step(model.nets.encoder.mlp.params_mut())?;
                acc.add(&r);
            }
        }
        curves.push(acc.finish(epoch));
    }
    model.nets.clear_grads();

    let (eval, pairing) = if model.is_finite() {
        match cfg.dataset {
            Dataset::Gmm => {
                let clf = shared_classifier(cfg.classifier_seed)?;
                (Some(evaluate_gmm(cfg, &model, &data.test, &clf)?), None)
            }
            Dataset::Pairing { .. } => (None, Some(pairing_accuracy(&model.nets.encoder, &data.test, cfg.seed)?)),
        }
    } else {
        (None, None)
    };

    let record = RunRecord {
        config_hash: cfg.hash(),
        method: cfg.method,
        seed: cfg.seed,
        config: cfg.clone(),
        status,
        curves,
        eval,
        pairing,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

fn diverged(r: &LossReport, limit: f64) -> Option<String> {
    if !r.all_finite() {
        Some("non-finite loss".into())
    } else if r.peak_logit > limit {
        Some(format!("|logit| {:.3e} exceeds {limit:.1e}", r.peak_logit))
    } else {
        None
    }
}

fn dae_step(
    nets: &mut AliceNets,
    x: &Tensor,
    noise_std: f64,
    rng: &mut impl Rng,
    opt_enc: &mut Adam,
    opt_dec: &mut Adam,
) -> Result<f64, HarnessError> {
    let mut tape = Tape::new();
    let enc = nets.encoder.bind(&mut tape, true);
    let dec = nets.decoder.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let x_hat = dae_forward(&mut tape, (&nets.encoder, &enc), (&nets.decoder, &dec), xv, noise_std, rng)?;
    let loss = cycle_explicit_loss(&mut tape, xv, x_hat, 2)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Ok(value);
    }
    let g = tape.backward(loss)?;
    nets.encoder.mlp.accumulate_grads(&tape, &g, &enc)?;
    nets.decoder.mlp.accumulate_grads(&tape, &g, &dec)?;
    opt_enc.step(nets.encoder.mlp.params_mut())?;
    opt_dec.step(nets.decoder.mlp.params_mut())?;
    Ok(value)
}

#[derive(Default)]
struct Accumulator {
    g: Vec<f64>,
    d: BTreeMap<String, Vec<f64>>,
    terms: BTreeMap<String, Vec<f64>>,
}

impl Accumulator {
    fn add(&mut self, r: &LossReport) {
        self.g.push(r.generator_loss);
        for (k, v) in &r.terms {
            self.terms.entry(k.clone()).or_default().push(*v);
        }
    }

    fn add_d(&mut self, r: &LossReport) {
        for (k, v) in &r.discriminator_objectives {
            self.d.entry(k.clone()).or_default().push(*v);
        }
    }

    fn finish(self, epoch: usize) -> EpochStats {
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        EpochStats {
            epoch,
            generator_loss: mean(&self.g),
            discriminator: self.d.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
            terms: self.terms.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
        }
    }
}

/// Sample score, cycle error and encoding purity on the held-out mixture.
pub fn evaluate_gmm(
    cfg: &RunConfig,
    model: &TrainedModel,
    test: &LabeledBatch,
    clf: &ToyClassifier,
) -> Result<EvalReport, HarnessError> {
    let opts = EvalOptions {
        bootstrap: cfg.bootstrap,
        seed: cfg.seed ^ EVAL_SALT,
        ..EvalOptions::default()
    };
    Ok(evaluate(&model.nets.encoder, &model.nets.decoder, test, clf, opts)?)
}

/// Fraction of held-out x from the two diagonal outer components whose
/// encoding has the opposite sign of `x1 + x2`.
pub fn pairing_accuracy(encoder: &StochasticMap, test: &LabeledBatch, seed: u64) -> Result<PairingEval, HarnessError> {
    let rows: Vec<usize> = (0..test.len()).filter(|&i| matches!(test.labels[i], 1 | 4)).collect();
    let x = test.points.select_rows(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_SALT);
    let z = encoder.sample_values(&x, &mut rng)?;
    let hits = (0..rows.len())
        .filter(|&i| {
            let (xr, zr) = (x.row(i), z.row(i));
            (xr[0] + xr[1]) * (zr[0] + zr[1]) < 0.0
        })
        .count();
    Ok(PairingEval {
        accuracy: hits as f64 / rows.len().max(1) as f64,
        evaluated: rows.len(),
    })
}

/// Runs `train`, converting errors and panics into a `failed` record.
pub fn train_isolated(cfg: &RunConfig) -> RunRecord {
    match catch_unwind(AssertUnwindSafe(|| train(cfg))) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => RunRecord::failed(cfg, e.to_string()),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            RunRecord::failed(cfg, format!("panicked: {msg}"))
        }
    }
}
