//! Unit-level structural plasticity engine.
//!
//! Masked MLP/ConvNet kernels with manual backprop, compactness budgets, grow
//! and prune operators, optimizers with birth-time interventions, continual
//! data streams, and trajectory and cohort diagnostics.

pub mod budget;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod structural;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
