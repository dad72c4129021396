//! Counter-keyed random streams.
//!
//! Every random draw in the pipeline comes from a ChaCha stream whose key is
//! derived from `(seed, purpose, indices...)`, so any stream can be recreated
//! in isolation and runs are bit-reproducible regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_INIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;
pub const STREAM_DROPOUT: u64 = 4;
pub const STREAM_SYNTH_FIELD: u64 = 5;
pub const STREAM_SYNTH_SEGMENT: u64 = 6;
pub const STREAM_TRIAL: u64 = 7;

pub fn keyed_rng(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for k in key {
        hasher.update(k.to_le_bytes());
    }
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derive a child seed from a parent seed and key path.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    use rand::RngCore;
    keyed_rng(seed, key).next_u64()
}
