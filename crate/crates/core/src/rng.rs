//! Seed derivation and per-sample random streams.
//!
//! Every sample owns a 64-bit seed derived from the master seed and its
//! index with a fixed mixing function. Independent purposes (attribute draws,
//! geometry, pixel noise, clutter) read disjoint ChaCha streams keyed by that
//! seed, so no sample's randomness depends on generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed mixing of a master seed with a counter.
pub fn mix(master: u64, counter: u64) -> u64 {
    splitmix64(master ^ splitmix64(counter.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Seed of the `index`-th sample of a dataset.
pub fn sample_seed(master: u64, index: u64) -> u64 {
    mix(master, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Attributes = 1,
    Geometry = 2,
    Noise = 3,
    Clutter = 4,
    Split = 5,
}

/// Counter-based generator for one purpose of one sample.
pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
