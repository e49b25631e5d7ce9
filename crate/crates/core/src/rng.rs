//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`SimRng`], a ChaCha8 stream
//! generator seeded from a single `u64` through `SeedableRng::seed_from_u64`.
//! Instance generation and simulation runs use separate streams: generation is
//! seeded with the instance seed, runs with [`derive_run_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `run_index` on the instance generated with `instance_seed`.
pub fn derive_run_seed(instance_seed: u64, run_index: u64) -> u64 {
    splitmix64(splitmix64(instance_seed) ^ run_index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}
