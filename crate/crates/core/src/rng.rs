//! Counter-based randomness.
//!
//! Every random quantity in the crate is a pure function of a 64-bit key and a
//! 64-bit counter, so any node state, replicate or particle can be recomputed
//! in isolation. Keys form a tree: [`derive`] hashes a parent key with a child
//! index (replicate number, column, particle slot, ...). Nothing depends on
//! the order in which work is scheduled, which is what makes results
//! independent of the worker count.
//!
//! The mixing function is the SplitMix64 finalizer; a draw is two rounds of it
//! over the key and the Weyl-scrambled counter.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const COUNTER_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// Domain separators for independent sub-streams derived from one seed.
pub mod domain {
    pub const NET: u64 = 0x6e65_7400;
    pub const REPLICATE: u64 = 0x7265_7000;
    pub const CHAIN: u64 = 0x6368_6e00;
    pub const SPLIT: u64 = 0x7370_6c00;
    pub const SCENE: u64 = 0x7363_6e00;
    pub const CURVE: u64 = 0x6375_7200;
    pub const TRACK: u64 = 0x7472_6b00;
    pub const NOISE: u64 = 0x6e6f_6900;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child key for `index` under `key`.
#[inline]
pub fn derive(key: u64, index: u64) -> u64 {
    mix64(mix64(key.wrapping_add(GOLDEN_GAMMA)) ^ index.wrapping_mul(COUNTER_GAMMA))
}

/// 64 random bits at position `counter` of the stream `key`.
#[inline]
pub fn bits(key: u64, counter: u64) -> u64 {
    mix64(key ^ mix64(counter.wrapping_mul(GOLDEN_GAMMA).wrapping_add(COUNTER_GAMMA)))
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn uniform(key: u64, counter: u64) -> f64 {
    (bits(key, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Sequential view of a counter stream, for code that wants an [`RngCore`]
/// (distribution sampling, shuffles).
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        let u = uniform(self.key, self.counter);
        self.counter += 1;
        u
    }

    /// Uniform integer in `0..n` (`n > 0`), by widening multiplication.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let b = bits(self.key, self.counter);
        self.counter += 1;
        b
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let b = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }
}
