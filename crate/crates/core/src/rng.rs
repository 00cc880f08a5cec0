//! Named, independent random streams derived from one master seed.
//!
//! Every consumer draws from its own ChaCha stream so that adding or removing
//! draws in one place (say, synthetic label generation) leaves batch order and
//! weight initialisation untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    Benchmark = 1,
    NoiseInjection = 2,
    SyntheticLabels = 3,
    BatchShuffle = 4,
    WeightInit = 5,
    Pretrain = 6,
    Split = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for `kind`, further keyed by `slot` (training iteration, variant, ...).
    pub fn stream(&self, kind: Stream, slot: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((kind as u64) << 32) | slot as u64);
        rng
    }
}
