//! Reverse-mode automatic differentiation over rank-2 `f64` tensors.
//!
//! A [`Tape`] records each operation as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node sweeps the tape once in reverse and
//! returns [`Gradients`] for every node that requires one. Tapes are cheap;
//! build a fresh one per minibatch.
//!
//! ```
//! use alice_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let t = tape.param(Tensor::scalar(0.0));
//! let s = tape.sigmoid(t).unwrap();
//! let grads = tape.backward(s).unwrap();
//! assert_eq!(tape.scalar(s), 0.5);
//! assert_eq!(grads.get(t).unwrap()[0], 0.25);
//! ```

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use tape::{sigmoid, softplus, Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::log_sum_exp;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensors above rank 2 are not supported (shape {0:?})")]
    Rank(Vec<usize>),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("operation expects {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
}
