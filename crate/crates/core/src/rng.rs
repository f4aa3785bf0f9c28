//! Reproducible random streams.
//!
//! All randomness derives from one 64-bit seed. Each consumer asks for an
//! independent ChaCha8 stream keyed by a purpose tag and up to two counters
//! (for example training step and sequence index), so results do not depend
//! on the order in which streams are drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags; keep values stable, they are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Batch = 2,
    Corrupt = 3,
    Eval = 4,
    Sample = 5,
    NoiseSim = 6,
    Test = 7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, a: u64, b: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let id = splitmix64(splitmix64(splitmix64(purpose as u64) ^ a) ^ b);
        rng.set_stream(id);
        rng
    }
}
