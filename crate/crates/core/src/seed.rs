//! Seed splitting.
//!
//! Every random stream in the crate is derived from a master seed with
//! [`derive_seed`]: `splitmix64(master ^ splitmix64(tag) + index * GOLDEN)`.
//! Streams are keyed by a purpose tag and a counter (for example the channel
//! index), so results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags used across the crate.
pub mod tag {
    pub const OSCILLATOR_FIT: u64 = 1;
    pub const OSCILLATOR_SIM: u64 = 2;
    pub const RPM: u64 = 3;
    pub const GENERATOR: u64 = 4;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64((master ^ splitmix64(tag)).wrapping_add(index.wrapping_mul(GOLDEN)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
