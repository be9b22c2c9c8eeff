//! Deterministic per-index Gaussian draws.
//!
//! Every stochastic quantity in the crate is a pure function of
//! `(seed, stream, index)`: the draw for component `i` never depends on how
//! many other components exist or in which order they are realized, so the
//! same seed reproduces the identical values under any parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Domain-separation tags so the mismatch, measurement and ensemble streams
/// of the same user seed are independent.
pub(crate) const STREAM_MISMATCH: u64 = 0x4d49534d41544348; // "MISMATCH"
pub(crate) const STREAM_MEASURE: u64 = 0x4d4541535552454d;
pub(crate) const STREAM_ENSEMBLE: u64 = 0x454e53454d424c45;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ stream).wrapping_add(splitmix64(index)))
}

/// Standard-normal draw that is a pure function of `(seed, stream, index)`.
pub(crate) fn gaussian(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stream, index));
    rng.sample(StandardNormal)
}

/// Seeded RNG for sequential sampling (ensemble averaging).
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream, 0))
}
