//! Training loop, experiments and command line for the domain convex game lab.

pub mod config;
pub mod dump;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod train;
pub mod verify;

pub use config::{RegKind, TrainConfig, Variant};
pub use error::{HarnessError, Result};
pub use metrics::{EpochMetrics, RunResult};
pub use train::{train, RunOutput};
