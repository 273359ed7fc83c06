//! Seedable random streams.
//!
//! Every consumer of randomness owns an [`RngStream`] identified by a
//! `(seed, stream_id)` pair. The pair is mixed into the 256-bit state of a
//! xoshiro256++ generator, two words from each half, so distinct pairs start
//! from distinct states. Work keyed by gene index therefore produces the same
//! draws no matter how it is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let words = [
            derive_seed(seed, 0),
            derive_seed(seed, 1),
            derive_seed(stream_id, 2),
            derive_seed(stream_id, 3),
        ];
        let mut bytes = [0u8; 32];
        for (chunk, w) in bytes.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let inner = Xoshiro256PlusPlus::from_seed(bytes);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Derives a child seed from a parent seed and a tag (SplitMix64 finalizer).
///
/// Used where whole sub-runs need their own seed, e.g. the three model fits
/// of a Bayes-factor comparison or the seeds of a benchmark sweep.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
