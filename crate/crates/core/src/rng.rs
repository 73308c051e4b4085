//! Seeded randomness.
//!
//! Everything random in the crate draws from [`SplitMix64`] streams. Keys
//! such as `(seed, subject, sample)` are folded into a stream seed with the
//! splitmix finalizer so per-item streams are independent of the order in
//! which items are produced.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub use rand_xoshiro::SplitMix64;

pub fn seeded(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into a stream seed.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix(seed), |acc, &k| mix(acc ^ mix(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> SplitMix64 {
    seeded(derive(seed, keys))
}

/// Uniform in `[lo, hi)`.
pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn normal(rng: &mut SplitMix64) -> f64 {
    StandardNormal.sample(rng)
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T>(rng: &mut SplitMix64, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

pub fn index(rng: &mut SplitMix64, len: usize) -> usize {
    rng.random_range(0..len)
}
