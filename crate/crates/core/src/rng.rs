//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, stream, site, counter)`: the key
//! is derived by chaining SplitMix64 finalizers over the three identifiers,
//! and the i-th output is the finalizer applied to `key + i * GOLDEN`. This
//! means a site's displacement never depends on how many other sites were
//! sampled before it, or on which thread sampled them.

use rand_core::{impls, RngCore};
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit key from a seed and any number of labels.
pub fn derive_key(seed: u64, labels: &[u64]) -> u64 {
    let mut k = mix64(seed.wrapping_add(GOLDEN));
    for &l in labels {
        k = mix64(k ^ mix64(l.wrapping_add(GOLDEN)));
    }
    k
}

#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64, site: u64) -> Self {
        CounterRng {
            key: derive_key(seed, &[stream, site]),
            counter: 0,
        }
    }

    pub fn from_labels(seed: u64, labels: &[u64]) -> Self {
        CounterRng {
            key: derive_key(seed, labels),
            counter: 0,
        }
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
