//! Contractive diffusion probabilistic models: forward SDE families, exact
//! scores of Gaussian-mixture targets, reverse-time samplers, Wasserstein
//! metrics and error bounds.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod transform;

pub use error::{Error, Result};
