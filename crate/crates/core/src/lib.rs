//! Exemplar-guided active learning.
//!
//! The [`engine`] drives labeling sessions; the other modules are the pieces
//! it is built from and can be used on their own.

pub mod bounds;
pub mod classifier;
pub mod dataset;
pub mod engine;
pub mod eval;
pub mod rng;
pub mod sampling;

pub use bounds::{Interval, WeightedSampleStats};
pub use classifier::{ClassifierModel, ProbVector, TrainConfig};
pub use dataset::{Dataset, Exemplar, ExampleRecord};
pub use engine::{
    ClassStatus, EngineError, Event, Phase, QueryMode, QueryTicket, RunConfig, Session,
    SessionSnapshot, Strategy,
};
pub use sampling::{EstimateKind, FrequencyEstimate, SamplingDistribution};
