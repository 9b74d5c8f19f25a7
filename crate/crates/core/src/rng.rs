//! Pinned random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (via `rand_chacha`)
//! seeded with `seed_from_u64(seed)` and switched to a numbered stream. Uniform
//! doubles are built from the top 53 bits of `next_u64`, so the sequence of
//! values is fixed by the ChaCha8 keystream alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Streams below this value are reserved for per-row dataset generation.
const PURPOSE_BASE: u64 = 1 << 48;

#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    Split = 3,
    Probe = 4,
}

/// Stream used to sample dataset row `row`.
pub fn row_stream(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// Stream used for a non-dataset purpose, optionally indexed (e.g. by epoch).
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PURPOSE_BASE + ((purpose as u64) << 32) + index);
    rng
}

/// Uniform double in `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
