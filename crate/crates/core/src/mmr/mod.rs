//! Kernel maximum-moment-restriction test: Gram matrices, the U-statistic,
//! its multinomial bootstrap, and the witness function.

mod kernel;
mod stat;
mod witness;

pub use kernel::{
    gram, median_heuristic, squared_distances, Bandwidth, Gram, Heuristic, KernelFamily, KernelSpec,
    Standardizer,
};
pub use stat::{
    bootstrap_null, bootstrap_weights, mmr_statistic, null_from_weights, p_value, run_test,
    run_test_with_gram, TestResult,
};
pub use witness::{witness, BoundingBox, WitnessEvaluator};
