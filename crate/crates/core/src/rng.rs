//! Seeded, splittable random streams.
//!
//! Every random draw in the crate goes through [`RngStream`]. A stream is
//! keyed by a 64-bit seed; [`RngStream::split`] derives an independent child
//! stream from the parent's key and an index, without consuming the parent.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Name recorded in run manifests.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), children keyed by SplitMix64(seed, index)";

#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Child stream for `index`. Depends only on this stream's key.
    pub fn split(&self, index: u64) -> RngStream {
        let mixed = splitmix64(self.key ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)));
        RngStream::new(mixed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
