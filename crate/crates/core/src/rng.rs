//! Seeded index shuffling.
//!
//! Splits and subsamples must reproduce across implementations, so the
//! generator and the index-drawing rule are fixed here rather than delegated
//! to `rand`'s version-dependent range sampling:
//!
//! * generator: xoshiro256++ seeded through `seed_from_u64` (SplitMix64
//!   expansion of the 64-bit seed);
//! * bounded draw: `j = (next_u64() * bound) >> 64` (multiply-high, no
//!   rejection);
//! * shuffle: Fisher–Yates from the last index down to 1.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Draws an index in `0..bound`. `bound` must be non-zero.
pub fn bounded(rng: &mut impl RngCore, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

pub fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, i + 1);
        items.swap(i, j);
    }
}

/// The permutation of `0..n` produced by shuffling the identity with `seed`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut seeded(seed));
    idx
}

/// `k` distinct indices out of `0..n`, sorted ascending.
///
/// Runs a partial Fisher–Yates (front to back) so the first `k` draws match
/// the first `k` positions of a forward shuffle.
pub fn choose_sorted(n: usize, k: usize, seed: u64) -> Vec<usize> {
    assert!(k <= n);
    let mut rng = seeded(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + bounded(&mut rng, n - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    chosen
}
