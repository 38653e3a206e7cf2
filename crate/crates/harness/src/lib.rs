//! Experiment harness: configuration, protocols, run logs and analysis.

pub mod analyze;
pub mod config;
pub mod dataset;
pub mod error;
pub mod protocol;
pub mod runlog;
pub mod selftest;
pub mod trainer;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
