//! Seed derivation shared by every Monte Carlo estimator.
//!
//! Each independent unit of work (a realization, a dataset sample, ...) gets
//! its own generator seeded with [`child_seed`]`(parent, index)`. Because the
//! child seed depends only on the parent and the index, results do not depend
//! on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child of `parent`:
/// `mix64(parent ^ mix64((index + 1) * GOLDEN_GAMMA))`.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator for the `index`-th child of `parent`.
pub fn child_rng(parent: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(child_seed(parent, index))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
