//! Seeded randomness. Every stochastic component draws from a `ChaCha8Rng`
//! whose seed is derived from the run seed and a fixed stream tag, so runs
//! are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream tags for the independent random streams of a run.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const PRETRAIN_BATCHES: u64 = 2;
    pub const SAMPLER: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const KMEANS: u64 = 5;
    pub const IDENTITIES: u64 = 6;
    pub const TRANSFORMS: u64 = 7;
    pub const NOISE: u64 = 8;
}
