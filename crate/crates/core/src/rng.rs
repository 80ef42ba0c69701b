//! Seeded random streams.
//!
//! Every run derives independent ChaCha8 streams from its seed, one per
//! consumer, so that changing how often one consumer draws never shifts the
//! numbers another consumer sees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags for the consumers of a run's seed.
pub mod streams {
    pub const SPAWN: u64 = 1;
    pub const DRIVER: u64 = 2;
    pub const SENSOR: u64 = 3;
    pub const SYBIL: u64 = 4;
}

/// A sequential stream.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomStream { rng }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen()
    }

    /// Uniform draw in `[lo, hi]`; returns `lo` for an empty range.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Counter-addressed stream: the draw for `(key, counter)` is fixed by the
/// seed alone, independent of which other draws were made.
#[derive(Clone, Debug)]
pub struct KeyedStream {
    key: [u8; 32],
}

impl KeyedStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut base = RandomStream::new(seed, stream);
        let mut key = [0u8; 32];
        base.fill_bytes(&mut key);
        KeyedStream { key }
    }

    /// Uniform draw in `[0, 1)` addressed by `(key, counter)`.
    pub fn unit(&self, key: u64, counter: u64) -> f64 {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(key);
        rng.set_word_pos(u128::from(counter) * 2);
        rng.gen()
    }
}
