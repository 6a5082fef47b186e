pub mod cd;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod importance;
pub mod linalg;
pub mod mcmle;
pub mod model;
pub mod mple;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod sampler;
pub mod study;

pub use cd::CdConfig;
pub use error::{Error, Result};
pub use estimate::{Diagnostics, Estimate};
pub use graph::{CountGraph, CovariateSet, SupportSpec};
pub use mcmle::{McmleConfig, SeedMethod};
pub use model::{ModelSpec, ReferenceMeasure, TermSpec};
pub use mple::MpleOptions;
pub use parallel::Executor;
pub use sampler::{ProposalKind, SamplerConfig};
pub use study::StudyConfig;
