//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), seeded
//! with `seed_from_u64(seed)` and then switched to a 64-bit stream id. Work
//! items (a dataset sample, a sampled trajectory) each own a stream, so
//! results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for item `index` of class `class`: `(class << 32) | index`.
pub fn class_stream(class: usize, index: usize) -> u64 {
    ((class as u64) << 32) | (index as u64 & 0xffff_ffff)
}
