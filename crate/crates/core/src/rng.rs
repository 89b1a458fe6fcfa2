//! Counter-based random streams.
//!
//! Every random draw in a simulated frame comes from a stream keyed by
//! `(root seed, frame index, pixel index)`. Streams are stateless apart from
//! a draw counter, so the value of any pixel is independent of which thread
//! evaluates it or in what order.

use rand_core::{impls, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a bijection on `u64` with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a 64-bit key.
pub fn derive_key(root: u64, words: &[u64]) -> u64 {
    words.iter().fold(mix64(root ^ GOLDEN), |acc, &w| {
        mix64(acc.wrapping_add(GOLDEN) ^ mix64(w.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

/// Keyed counter generator: draw `i` is `mix64(key ^ mix64(i * GOLDEN))`.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Stream for one pixel of one frame.
    pub fn for_pixel(seed: u64, frame_index: u64, pixel_index: u64) -> Self {
        Self::from_key(derive_key(seed, &[frame_index, pixel_index]))
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
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
        mix64(self.key ^ mix64(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
