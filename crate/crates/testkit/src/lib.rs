//! Test-only reference code.
//!
//! Nothing here calls into the library crates: the oracles are straight-line
//! loops over plain slices so they stay independent of the implementations
//! they check.

pub mod fd;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// `n` distinct indices below `len` (all of them when `n >= len`).
pub fn sample_indices(rng: &mut impl Rng, len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    rand::seq::index::sample(rng, len, n).into_vec()
}
