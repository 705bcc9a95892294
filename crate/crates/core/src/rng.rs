//! Seeded, splittable random streams.
//!
//! Every parallel unit of work (a restart, an outer sample, an optimizer
//! start) owns a ChaCha stream selected by `(seed, unit)`, so results do not
//! depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, unit: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit);
    rng
}

/// Derives a child seed; used when a unit of work itself needs to split.
pub fn child_seed(seed: u64, unit: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ unit.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
