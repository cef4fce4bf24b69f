//! Seeded random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is
//! derived from the master seed and a short tag path (epoch, worker, ...).
//! Streams never share state, so the draw sequence of one consumer is
//! independent of how many draws another consumer makes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a list of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

pub fn stream(seed: u64, tags: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Tags used to partition the master seed.
pub mod tag {
    pub const ROLLOUT: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const POLICY_NOISE: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const VALUE_FIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const LEMMA1: u64 = 7;
    pub const VALIDATION: u64 = 8;
    pub const HELDOUT: u64 = 9;
    pub const GOAL: u64 = 10;
}
