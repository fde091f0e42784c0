pub mod dataset;
pub mod error;
pub mod harness;
pub mod mmr;
pub mod nuisance;
pub mod rng;
pub mod signals;
pub mod survival;

pub use error::{Error, Result};
pub use dataset::{Cohort, DGPConfig, SubjectRecord};
pub use harness::{ExperimentConfig, NuisanceMode, RejectionTable};
pub use mmr::{KernelSpec, TestResult};
pub use nuisance::{NuisanceSet, TrimConfig};
pub use signals::{SignalKind, SignalVector};
pub use survival::{CoxModel, SupportPolicy};
