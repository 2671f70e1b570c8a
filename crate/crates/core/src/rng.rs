//! Deterministic, counter-based random streams.
//!
//! Every [`Stream`] is a ChaCha8 keystream. The 256-bit key of a
//! [`StreamFamily`] is `SHA-256(seed as u64 little-endian || label bytes)`;
//! child families hash the parent key with the child label. Inside a family,
//! stream `i` uses ChaCha stream id `i` starting at word position 0.
//!
//! Replicate `i` of any parallel loop draws from `family.stream(i)`, so its
//! numbers do not depend on which worker runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// A keyed family of independent streams.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl std::fmt::Debug for StreamFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StreamFamily({})", hex::encode(&self.key[..8]))
    }
}

impl StreamFamily {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    /// Derive an independent family identified by `label`.
    pub fn child(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(label.as_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        Stream { rng }
    }
}

/// One reproducible random stream.
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-a, a)`.
    #[inline]
    pub fn symmetric(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.uniform() - 1.0)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Zero-mean Gaussian with the given variance.
    #[inline]
    pub fn gaussian(&mut self, variance: f64) -> f64 {
        variance.sqrt() * self.standard_normal()
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
