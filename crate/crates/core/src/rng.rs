//! Deterministic random number streams.
//!
//! Every stochastic routine in this crate draws from a ChaCha8 generator
//! keyed by a `(seed, stream_id)` pair. ChaCha is counter based, so a given
//! key always produces the same sequence regardless of platform, thread
//! count, or call interleaving. Parallel drivers hand each unit of work its
//! own stream id instead of sharing a generator.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::group::GroupElement;

pub struct WalkRng {
    inner: ChaCha8Rng,
}

impl WalkRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        WalkRng { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `0..bound`, unbiased via rejection of the tail zone.
    #[inline]
    pub fn index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let bound = bound as u64;
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Uniform draw from the half-open interval (0, 1], with 53-bit resolution.
    #[inline]
    pub fn unit_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Number of failures before the first success, `P(k) = (1-q) q^k`,
    /// where `q` is the failure probability.
    pub fn geometric_failures(&mut self, failure_prob: f64) -> u64 {
        if failure_prob <= 0.0 {
            return 0;
        }
        debug_assert!(failure_prob < 1.0);
        let u = self.unit_open();
        (u.ln() / failure_prob.ln()).floor() as u64
    }
}

/// SplitMix64 finalizer; used to derive decorrelated seeds and stream ids.
#[inline]
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a fixed domain tag.
#[inline]
pub fn derive(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag))
}

/// FNV-1a over a byte slice. Stable across builds, unlike the std hasher.
#[inline]
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Stream id for an escape trial keyed by the trial's start element, so the
/// same element draws the same trial paths in every set it appears in.
#[inline]
pub fn element_stream(seed_salt: u64, g: &GroupElement, trial: u32) -> u64 {
    let mut bytes = Vec::with_capacity(32);
    g.write_canonical_bytes(&mut bytes);
    mix64(seed_salt ^ fnv1a(&bytes) ^ ((trial as u64) << 40))
}
