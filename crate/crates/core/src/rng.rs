//! Seed derivation. Every random stream in a simulation is seeded from the
//! master seed and a path of stream tags, so results do not depend on the
//! order in which frames or users are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(master), |acc, &tag| splitmix(acc ^ splitmix(tag)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the harness.
pub mod stream {
    pub const SYMBOLS: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const TAIL: u64 = 3;
}
