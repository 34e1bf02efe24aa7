//! ALI-family adversarial joint-distribution matching with
//! conditional-entropy regularization, built on a small reverse-mode
//! autodiff engine, plus exact discrete analytics and a toy-GMM
//! experiment harness.

pub mod autodiff;
pub mod nets;
pub mod objectives;
pub mod infotheory;
pub mod data;
pub mod metrics;
pub mod harness;
