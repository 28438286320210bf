//! Seedable, platform-stable randomness.
//!
//! All sampling in this crate goes through [`RngState`], a thin wrapper around
//! ChaCha8 that records its seed and the number of draws taken. ChaCha has a
//! fixed cross-platform stream for a given seed, which is what makes manifests
//! and decode traces reproducible bit-for-bit. The generator name and seed are
//! recorded in every manifest record.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Name recorded in manifest provenance for the generator backing [`RngState`].
pub const GENERATOR_NAME: &str = "chacha8";

/// A seeded random stream with an explicit position.
///
/// Identical seeds yield identical draw sequences across runs and platforms.
/// Cloning forks the stream at its current position.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            draws: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of primitive draws taken so far (the stream position).
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Derives an independent child stream. Children with distinct labels are
    /// decorrelated from each other and from the parent; derivation does not
    /// advance the parent.
    pub fn derive(&self, label: u64) -> RngState {
        RngState::new(splitmix64(
            self.seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        ))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    /// Uniform f64 in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `[0, n)`. Rejection-sampled, so it is unbiased.
    ///
    /// # Panics
    /// Panics if `n == 0`.
    pub fn gen_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "gen_index: empty range");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// Bernoulli draw with success probability `p`.
    pub fn gen_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seeds_identical_streams() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.draws(), 1000);
    }

    #[test]
    fn chacha8_stream_is_pinned() {
        // Frozen first draw for seed 0; a change here means the generator is
        // no longer the stream that existing manifests recorded.
        let mut r = RngState::new(0);
        assert_eq!(r.next_u64(), PINNED_SEED0_FIRST_DRAW);
    }

    const PINNED_SEED0_FIRST_DRAW: u64 = 13080132717333068652;

    #[test]
    fn derive_is_stable_and_decorrelated() {
        let root = RngState::new(7);
        let mut a = root.derive(1);
        let mut b = root.derive(2);
        let mut a2 = root.derive(1);
        assert_eq!(a.next_u64(), a2.next_u64());
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn next_f64_in_unit_interval() {
        let mut r = RngState::new(3);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn gen_index_bounds_and_coverage() {
        let mut r = RngState::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[r.gen_index(7)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
