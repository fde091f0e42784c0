//! Benchmark inputs shared by the criterion benches.

use falsify_core::dataset::simulate;
use falsify_core::harness::presets::preset;
use falsify_core::Cohort;

/// One simulated cohort from a bundled preset, shrunk to `n_os` OS subjects.
pub fn cohort(name: &str, n_os: usize, seed: u64) -> Cohort {
    let mut config = preset(name).expect("bundled preset");
    config.dgp.n.os = n_os;
    config.dgp.n.rct = n_os / 3;
    simulate(&config.dgp, seed).expect("simulates").cohort
}
