//! Deterministic counter-based random streams.
//!
//! Every random draw in a simulation comes from a [`CounterRng`]: the i-th
//! output of a stream is `mix64(key ^ mix64(i * GAMMA))`, where `mix64` is the
//! SplitMix64 finalizer and `key` identifies the stream. Substream keys are
//! derived by folding integer labels (seed, run index, instance index, ...)
//! through the same mixer, so streams are independent of each other and of
//! how many sibling streams exist: adding an agent to a network never
//! perturbs the draws seen by the others.

/// Weyl-sequence increment from SplitMix64 (golden ratio in 2^64).
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seedable counter-based random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self::from_parts(seed, &[])
    }

    /// Derives an independent substream from a seed and a label path.
    pub fn from_parts(seed: u64, labels: &[u64]) -> Self {
        let mut key = mix64(seed.wrapping_add(GAMMA));
        for &label in labels {
            key = mix64(key ^ mix64(label.wrapping_add(GAMMA)));
        }
        CounterRng { key, counter: 0 }
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key ^ mix64(self.counter.wrapping_mul(GAMMA).wrapping_add(GAMMA)));
        self.counter += 1;
        out
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n); n must be > 0.
    #[inline]
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift bounded draw; bias is < 2^-53 for realistic n.
        (self.next_f64() * n as f64) as usize % n
    }
}
