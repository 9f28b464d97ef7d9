//! Reproducible random streams.
//!
//! Every random draw is addressed by a key derived from the global seed and
//! the trial/cell indices, a stream id, and the draw position within that
//! stream (ChaCha's block counter). Trials can therefore run in any order or
//! in parallel and still see identical randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used inside a single trial.
pub const STREAM_DATASET: u64 = 0;
pub const STREAM_SGD: u64 = 1;
pub const STREAM_VALIDATION: u64 = 2;
pub const STREAM_BOOTSTRAP: u64 = 3;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from a parent seed and a path of indices.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// The generator for `stream` under `seed`, positioned at draw 0.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
