//! Optimizers, learning-rate schedules and birth-time optimizer interventions.

mod base;
pub mod schedule;
pub mod slices;
pub mod transplant;
pub mod two_speed;

pub use base::{adam_step, sgd_step, AdamState, OptimizerKind, OptimizerState};
pub use schedule::{cosine_lr, LrSchedule};
pub use slices::{newborn_slices, ParamSlice, SliceKind};
pub use transplant::{moment_transplant, select_donor};
pub use two_speed::{two_speed_apply, TwoSpeed, TwoSpeedConfig};
