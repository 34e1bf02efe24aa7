use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::autodiff::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// What happens after the last linear layer. Both heads are the identity:
/// a generator is an implicit sampler, its randomness enters as input noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    #[default]
    Identity,
    GaussianSample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub noise_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    #[serde(default)]
    pub output_head: OutputHead,
    #[serde(default)]
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            noise_dim: 0,
            hidden,
            output_dim,
            activation,
            output_head: OutputHead::Identity,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, noise_dim: usize) -> Self {
        self.noise_dim = noise_dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.hidden.is_empty() {
            return Err(NetError::Config("hidden widths must be non-empty".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(NetError::Config(format!(
                "all dimensions must be >= 1 (input {}, hidden {:?}, output {})",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }

    /// Widths of every layer boundary, first layer input included.
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim + self.noise_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

/// Fully connected net; weights are stored `(fan_in, fan_out)` so a batch
/// `(B, fan_in)` multiplies on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    params: Vec<Tensor>,
}

/// Tape handles for one binding of an [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    trainable: bool,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

pub struct MlpOutput {
    pub output: Var,
    /// Post-activation values of every hidden layer.
    pub hidden: Vec<Var>,
}

impl Mlp {
    /// Gaussian init with std `1/sqrt(fan_in)`, zero biases.
    pub fn new(config: MlpConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let widths = config.widths();
        let mut params = Vec::with_capacity(2 * (widths.len() - 1));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("finite std");
            let w = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::zeros(vec![1, fan_out]));
        }
        Ok(Self { config, params })
    }

    /// All-zero weights and biases.
    pub fn zeros(config: MlpConfig) -> Result<Self, NetError> {
        let mut m = Self::new(config)?;
        for p in &mut m.params {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(m)
    }

    pub fn from_params(config: MlpConfig, params: Vec<Tensor>) -> Result<Self, NetError> {
        let reference = Self::new(config.clone())?;
        if reference.params.len() != params.len()
            || reference.params.iter().zip(&params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(NetError::Config("parameter shapes do not match config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.params.len() / 2
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let kind = if i % 2 == 0 { "weight" } else { "bias" };
                (format!("layer{}.{kind}", i / 2), p)
            })
            .collect()
    }

    /// Puts the parameters on `tape`, as differentiable leaves when
    /// `trainable`, as constants otherwise.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.clone(), trainable))
            .collect();
        Bound { vars, trainable }
    }

    /// Runs the net on an already-assembled input `(B, input_dim + noise_dim)`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, input: Var) -> Result<MlpOutput, NetError> {
        let width = tape.value(input).cols();
        let expected = self.config.input_dim + self.config.noise_dim;
        if width != expected {
            return Err(NetError::InputDim { expected, got: width });
        }
        let mut h = input;
        let mut hidden = Vec::with_capacity(self.config.hidden.len());
        let layers = self.num_layers();
        for l in 0..layers {
            let pre = tape.matmul(h, bound.vars[2 * l])?;
            let pre = tape.add(pre, bound.vars[2 * l + 1])?;
            if l + 1 == layers {
                h = pre;
            } else {
                h = match self.config.activation {
                    Activation::Tanh => tape.tanh(pre)?,
                    Activation::Relu => tape.relu(pre)?,
                };
                hidden.push(h);
            }
        }
        Ok(MlpOutput { output: h, hidden })
    }

    /// Copies gradients from a backward sweep into the parameters' grad
    /// slots, adding to anything already there.
    pub fn accumulate_grads(&mut self, tape: &Tape, grads: &Gradients, bound: &Bound) -> Result<(), NetError> {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            let Some(g) = grads.get(v) else { continue };
            let merged = match p.grad() {
                Some(prev) => prev.iter().zip(g).map(|(a, b)| a + b).collect(),
                None => g.to_vec(),
            };
            debug_assert_eq!(merged.len(), tape.value(v).len());
            p.set_grad(merged)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.params.iter_mut().for_each(Tensor::clear_grad);
    }

    /// Forward pass outside of training.
    pub fn eval(&self, input: &Tensor) -> Result<Tensor, NetError> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(out.output).clone())
    }
}
