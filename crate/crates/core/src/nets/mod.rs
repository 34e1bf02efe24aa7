//! Small MLPs playing the roles of the model: stochastic conditional
//! samplers (decoder `x ~ p(x|z)`, encoder `z ~ q(z|x)`), pair
//! discriminators that emit raw logits, and the denoising auto-encoder
//! baseline.

mod checkpoint;
mod mlp;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use mlp::{Activation, Bound, Mlp, MlpConfig, MlpOutput, OutputHead};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid net config: {0}")]
    Config(String),
    #[error("input has {got} features, net expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("batch mismatch: {0} vs {1} rows")]
    Batch(usize, usize),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Draws a `(rows, cols)` standard normal matrix.
pub fn gaussian_noise(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, v).expect("shape matches length")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRole {
    /// `g_θ(z, ε)`, generating x from z.
    Decoder,
    /// `g_φ(x, ζ)`, inferring z from x.
    Encoder,
}

/// Conditional sampler `output = g([input, noise])` with
/// `noise ~ N(0, I)`. With `noise_dim = 0` it is a deterministic map.
#[derive(Clone, Debug)]
pub struct StochasticMap {
    pub mlp: Mlp,
    pub role: MapRole,
}

impl StochasticMap {
    pub fn new(config: MlpConfig, role: MapRole) -> Result<Self, NetError> {
        Ok(Self {
            mlp: Mlp::new(config)?,
            role,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        self.mlp.config()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        self.mlp.bind(tape, trainable)
    }

    /// Draws one output per input row.
    pub fn sample(&self, tape: &mut Tape, bound: &Bound, input: Var, rng: &mut impl Rng) -> Result<Var, NetError> {
        let t = tape.value(input);
        let (rows, cols) = t.dims();
        let cfg = self.mlp.config();
        if cols != cfg.input_dim {
            return Err(NetError::InputDim {
                expected: cfg.input_dim,
                got: cols,
            });
        }
        let x = if cfg.noise_dim > 0 {
            let noise = tape.constant(gaussian_noise(rows, cfg.noise_dim, rng));
            tape.concat(input, noise)?
        } else {
            input
        };
        Ok(self.mlp.forward(tape, bound, x)?.output)
    }

    /// Sampling outside of training.
    pub fn sample_values(&self, input: &Tensor, rng: &mut impl Rng) -> Result<Tensor, NetError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = self.sample(&mut tape, &bound, x, rng)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorRole {
    /// `f_ω(x, z)` over joint pairs.
    Joint,
    /// `f_η(x, x̂)` over a sample and its reconstruction.
    Cycle,
    /// `f_χ(x, z)` over supervised pairs.
    Conditional,
}

/// Pair classifier emitting one raw logit per row; σ is applied by the
/// objective.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub mlp: Mlp,
    pub role: DiscriminatorRole,
    /// Hidden layer whose activations serve as features.
    pub feature_layer: usize,
}

pub struct Discriminated {
    /// `(B, 1)` logits.
    pub logits: Var,
    pub features: Var,
}

impl Discriminator {
    /// Features default to the last hidden layer.
    pub fn new(config: MlpConfig, role: DiscriminatorRole) -> Result<Self, NetError> {
        if config.noise_dim != 0 || config.output_dim != 1 {
            return Err(NetError::Config(
                "discriminators take no noise and emit one logit".into(),
            ));
        }
        let mlp = Mlp::new(config)?;
        let feature_layer = mlp.config().hidden.len() - 1;
        Ok(Self {
            mlp,
            role,
            feature_layer,
        })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        self.mlp.bind(tape, trainable)
    }

    /// Scores the row-aligned pairs `[a b]`.
    pub fn discriminate(&self, tape: &mut Tape, bound: &Bound, a: Var, b: Var) -> Result<Discriminated, NetError> {
        let (ra, rb) = (tape.value(a).rows(), tape.value(b).rows());
        if ra != rb {
            return Err(NetError::Batch(ra, rb));
        }
        let input = tape.concat(a, b)?;
        let out = self.mlp.forward(tape, bound, input)?;
        Ok(Discriminated {
            logits: out.output,
            features: out.hidden[self.feature_layer.min(out.hidden.len() - 1)],
        })
    }
}

/// `decoder(encoder(x + N(0, noise_std² I)))`.
pub fn dae_forward(
    tape: &mut Tape,
    encoder: (&StochasticMap, &Bound),
    decoder: (&StochasticMap, &Bound),
    x: Var,
    noise_std: f64,
    rng: &mut impl Rng,
) -> Result<Var, NetError> {
    if !(noise_std >= 0.0) {
        return Err(NetError::Config(format!("noise std must be >= 0, got {noise_std}")));
    }
    let input = if noise_std > 0.0 {
        let (r, c) = tape.value(x).dims();
        let noise = gaussian_noise(r, c, rng).map(|v| v * noise_std);
        let noise = tape.constant(noise);
        tape.add(x, noise)?
    } else {
        x
    };
    let z = encoder.0.sample(tape, encoder.1, input, rng)?;
    decoder.0.sample(tape, decoder.1, z, rng)
}
