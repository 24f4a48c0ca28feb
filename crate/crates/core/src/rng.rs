//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed by
//! `(master seed, namespace, index)`, so a stream never depends on how many
//! other streams were drawn before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const NS_TRAIN_DOMAINS: u64 = 1;
pub const NS_TEST_DOMAINS: u64 = 2;
pub const NS_MODEL_INIT: u64 = 3;
pub const NS_TRAIN_ORDER: u64 = 4;
pub const NS_SEARCH_TRIAL: u64 = 5;
pub const NS_HOLDOUT: u64 = 6;
pub const NS_SWEEP_REPEAT: u64 = 7;
pub const NS_RANDOM_SIMILARITY: u64 = 8;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, namespace: u64, index: u64) -> u64 {
    splitmix64(
        master ^ splitmix64(namespace.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix64(index)),
    )
}

pub fn stream(master: u64, namespace: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, namespace, index))
}
