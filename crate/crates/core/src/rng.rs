//! Deterministic RNG substreams.
//!
//! Every random process in a run (topology, link rates, task list, each
//! task's arrivals, fading, policy sampling) draws from its own stream keyed
//! by the run seed plus a tag, so adding or removing one consumer never
//! shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod tag {
    pub const TOPOLOGY: u64 = 1;
    pub const LINK_RATES: u64 = 2;
    pub const TASKS: u64 = 3;
    pub const ARRIVALS: u64 = 4;
    pub const FADING: u64 = 5;
    pub const POLICY: u64 = 6;
    pub const NETWORK: u64 = 7;
    pub const TRAFFIC: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with an ordered list of keys into a new 64-bit seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn substream(seed: u64, keys: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, keys))
}
