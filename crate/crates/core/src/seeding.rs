//! Seed derivation for independent, reproducible random streams.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit value. Child seeds
//! are derived with the SplitMix64 finalizer, so a replication's stream
//! depends only on `(base, key, index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replication `index` of the grid point identified by `key`.
pub fn derive_seed(base: u64, key: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(key)) ^ index)
}

/// Grid key for a floating-point grid coordinate.
pub fn float_key(value: f64) -> u64 {
    splitmix64(value.to_bits())
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
