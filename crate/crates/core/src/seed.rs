//! Stable seed derivation for per-record and per-pass random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a global seed with an ordered list of stream tags.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed), |acc, &t| mix64(acc ^ mix64(t)))
}

/// Seed for a record-scoped stream (e.g. augmentation of one galaxy in one pass).
pub fn record_seed(seed: u64, record_id: &str, stream: u64, index: u64) -> u64 {
    derive(seed, &[fnv1a(record_id.as_bytes()), stream, index])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags keep unrelated consumers of the same global seed apart.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRAIN_AUGMENT: u64 = 4;
    pub const TRAIN_DROPOUT: u64 = 5;
    pub const VAL_AUGMENT: u64 = 6;
    pub const VAL_DROPOUT: u64 = 7;
    pub const EVAL_AUGMENT: u64 = 8;
    pub const EVAL_DROPOUT: u64 = 9;
    pub const SYNTH: u64 = 10;
}
