//! Deterministic seeding. Every random stage draws from its own ChaCha
//! stream so results never depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that consume randomness within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Cohort = 1,
    GlobalCensoring = 2,
    SelectionBias = 3,
    Bootstrap = 4,
    CrossFit = 5,
    Regressor = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for the `index`-th item of a family (bootstrap replicate, fold, ...).
pub fn indexed_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((stream as u64) << 32) | (index & 0xFFFF_FFFF));
    rng
}
