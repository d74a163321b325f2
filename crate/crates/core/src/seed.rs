//! Stable seed derivation.
//!
//! Every randomized stage takes a `u64` seed. Child seeds are derived by
//! hashing the parent seed with a label so that independent stages never
//! share a stream and results do not depend on the platform hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `base` and a textual label.
pub fn derive(base: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Derive a child seed from `base`, a label and a counter (epochs, users).
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    derive(derive(base, label), &index.to_string())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
