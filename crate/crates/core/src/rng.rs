//! Seeded random streams.
//!
//! Every sampler in the crate takes an explicit `u64` seed. Independent
//! quantities drawn under one seed (noise, data, times) use distinct ChaCha
//! stream ids so that changing the sample count of one never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type FlowRng = ChaCha20Rng;

/// Stream ids used across the crate.
pub mod stream {
    pub const TARGET: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const TIME: u64 = 3;
    pub const INIT: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const PROBE: u64 = 6;
}

pub fn seeded(seed: u64) -> FlowRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn seeded_stream(seed: u64, stream: u64) -> FlowRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed; used when one experiment seed fans out to many runs.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
