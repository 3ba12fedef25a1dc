//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`SimRng`] (ChaCha8). Independent
//! streams are derived from a master seed plus a small tuple of indices, so a
//! trial's randomness depends only on its identity and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a derived stream is used for. Keeps e.g. target motion and sensor
/// noise for the same trial on disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TrainEpisode = 1,
    TrainDecision = 2,
    TrainNoise = 3,
    TrainShuffle = 4,
    ModelInit = 5,
    EvalTarget = 6,
    EvalNoise = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifier for `(purpose, a, b)`.
pub fn stream_id(purpose: Purpose, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(purpose as u64) ^ a) ^ b)
}

/// A generator for `(master_seed, purpose, a, b)`.
pub fn derive(master_seed: u64, purpose: Purpose, a: u64, b: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(purpose, a, b));
    rng
}
