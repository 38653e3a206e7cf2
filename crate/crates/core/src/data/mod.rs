//! Datasets, file loaders, task streams and replay.

pub mod cifar;
pub mod dataset;
pub mod idx;
pub mod replay;
pub mod streams;
pub mod synthetic;

pub use dataset::{DataPair, Dataset, Normalization, Split};
pub use replay::{replay_mix, ReplayBuffer, ReplayConfig, Sample};
pub use streams::{BatchPlan, Budget, EvalSet, StreamKind, Task, TaskStream};
pub use synthetic::{synthetic_pair, SyntheticSpec};
