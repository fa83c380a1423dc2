//! Seeded random streams.
//!
//! Every random quantity is drawn from ChaCha8 keyed by the master seed.
//! The 64-bit stream id encodes `(sample << 8) | purpose`, so the draws for
//! sample `i` never depend on how samples are scheduled across workers.
//!
//! Key derivation: the four 64-bit key words are successive SplitMix64
//! outputs starting from the master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The tag occupies the low byte of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Field = 1,
    EdgeCoins = 2,
    LoopSoup = 3,
    Walk = 4,
    Tree = 5,
    Origins = 6,
    Oracle = 7,
    Misc = 8,
}

pub const MAX_SAMPLE: u64 = (1 << 56) - 1;

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
    key: [u8; 32],
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, sample: u64, purpose: Purpose) -> ChaCha8Rng {
        assert!(sample <= MAX_SAMPLE, "sample index {sample} too large");
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream((sample << 8) | purpose as u64);
        rng
    }

    /// Random-access coin source for the edges of one sample.
    pub fn edge_coins(&self, sample: u64) -> EdgeCoins {
        EdgeCoins { rng: self.rng(sample, Purpose::EdgeCoins) }
    }
}

/// Map 64 random bits to a uniform double in `[0, 1)`.
#[inline]
pub fn unit_f64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn unit_u32(x: u32) -> f64 {
    x as f64 * (1.0 / 4_294_967_296.0)
}

/// The coin of edge slot `e` is the 32-bit word at position `e` of the
/// stream, scaled to `[0, 1)`. Sequential reads and random access agree.
pub struct EdgeCoins {
    rng: ChaCha8Rng,
}

impl EdgeCoins {
    pub fn coin(&mut self, slot: usize) -> f64 {
        self.rng.set_word_pos(slot as u128);
        unit_u32(self.rng.next_u32())
    }

    /// Fill `out` with the coins for slots `start..start + out.len()`.
    pub fn fill(&mut self, start: usize, out: &mut [f64]) {
        self.rng.set_word_pos(start as u128);
        for c in out.iter_mut() {
            *c = unit_u32(self.rng.next_u32());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = Streams::new(42);
        let a: Vec<u64> = (0..4).map(|_| s.rng(3, Purpose::Field).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b = s.rng(4, Purpose::Field).next_u64();
        let c = s.rng(3, Purpose::Walk).next_u64();
        assert_ne!(a[0], b);
        assert_ne!(a[0], c);
        assert_ne!(Streams::new(43).rng(3, Purpose::Field).next_u64(), a[0]);
    }

    #[test]
    fn random_access_coins_match_sequential() {
        let s = Streams::new(7);
        let mut coins = s.edge_coins(2);
        let mut block = vec![0.0; 100];
        coins.fill(37, &mut block);
        for (i, &c) in block.iter().enumerate() {
            assert_eq!(coins.coin(37 + i), c);
        }
        let mut rng = s.rng(2, Purpose::EdgeCoins);
        let first: Vec<f64> = (0..5).map(|_| unit_u32(rng.next_u32())).collect();
        for (i, &c) in first.iter().enumerate() {
            assert_eq!(coins.coin(i), c);
        }
    }

    #[test]
    fn unit_interval() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
        let mut rng = Streams::new(1).rng(0, Purpose::Misc);
        let m: f64 = (0..10_000).map(|_| unit_f64(rng.random())).sum::<f64>() / 1e4;
        assert!((m - 0.5).abs() < 0.02);
    }
}
