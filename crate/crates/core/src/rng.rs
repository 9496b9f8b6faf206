//! Seeding conventions.
//!
//! Every random computation in the crate runs on [`SimRng`] (ChaCha8, a
//! value-stable 64-bit-seeded generator). Replica `r` of an experiment with
//! master seed `s` uses `mix_seed(s, r)`, so any replica can be replayed on
//! its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford variant 13). Bijective with full avalanche.
pub fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `stream` from `master`.
///
/// `avalanche(master ^ avalanche(stream + 1) + GOLDEN_GAMMA)`; distinct streams
/// of one master never collide because both stages are bijections.
pub fn mix_seed(master: u64, stream: u64) -> u64 {
    avalanche((master ^ avalanche(stream.wrapping_add(1))).wrapping_add(GOLDEN_GAMMA))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: u64) -> SimRng {
    rng_from_seed(mix_seed(master, stream))
}
