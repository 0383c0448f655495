//! Layers with hand-written forward and backward passes.
//!
//! Every trainable layer follows the same protocol: `forward` caches what the
//! backward pass needs, `backward` consumes that cache, accumulates parameter
//! gradients and returns the gradient with respect to the layer input, and
//! `infer` evaluates without touching any state.

mod activation;
mod adam;
mod batchnorm;
mod embedding;
mod gradcheck;
mod init;
mod linear;
mod loss;
mod lstm;
mod param;

pub use activation::{relu, Relu};
pub use adam::{adam_step, clip_grad_norm, AdamConfig};
pub use batchnorm::BatchNorm1d;
pub use embedding::Embedding;
pub use gradcheck::{grad_check, Differentiable, GradCheckConfig, GradCheckReport};
pub use init::{he_normal_init, normal_init};
pub use linear::Linear;
pub use loss::softmax_cross_entropy;
pub use lstm::Lstm;
pub use param::{Mode, Parameter};
