//! Seeded random streams.
//!
//! The generator is xoshiro256++ (Blackman & Vigna), seeded by expanding a
//! single `u64` through SplitMix64. Both algorithms are fixed here rather than
//! taken from a platform default so that a seed replays the same sequence
//! everywhere, and so the four-word state can be written into checkpoints.
//! Distributions (normal, uniform ranges, shuffles) come from `rand` /
//! `rand_distr` on top of this core.

use rand::Rng;
use rand_core::{impls, RngCore};
use rand_distr::StandardNormal;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a tuple of words into one seed, e.g. `(seed, epoch)` or
/// `(seed, instance_id, view, epoch)`. Order matters.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x6A09_E667_F3BC_C908u64;
    for &p in parts {
        let mut s = acc ^ p.wrapping_mul(GOLDEN);
        acc = splitmix64(&mut s);
    }
    acc
}

/// xoshiro256++ stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    s: [u64; 4],
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { seed, s }
    }

    /// Independent stream for a labelled sub-task of this stream's seed.
    pub fn substream(&self, parts: &[u64]) -> Self {
        let mut all = Vec::with_capacity(parts.len() + 1);
        all.push(self.seed);
        all.extend_from_slice(parts);
        Self::new(derive_seed(&all))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn from_state(seed: u64, s: [u64; 4]) -> Self {
        Self { seed, s }
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * self.standard_normal()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }
}
