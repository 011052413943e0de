//! Domain convex game: Fourier amplitude augmentation, the supermodularity
//! regularizer over meta-trained coalitions, Input×Gradient sample
//! filtering, synthetic multi-domain data and exact quadratic oracles.

pub mod batch;
pub mod data;
pub mod error;
pub mod filter;
pub mod fourier;
pub mod game;
pub mod model;
pub mod oracles;
pub mod sample;

pub use batch::BatchInputs;
pub use error::{DcgError, Result};
pub use game::{CoalitionGame, CoalitionQuad, CoalitionSizes, GameConfig, MetaSplit, MlpGame, Regularizer, SplitMode};
pub use model::{LayerSpec, ModelParams, OptimizerState};
pub use sample::{DomainId, IdAllocator, ImageShape, Origin, Provenance, Sample, SampleId};
