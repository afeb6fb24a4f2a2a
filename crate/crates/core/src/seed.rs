//! Stable hashing for ids and per-run seeds.
//!
//! Everything here must be stable across platforms and releases: config ids
//! and run seeds end up in result files that later runs resume from.

use sha2::{Digest, Sha256};

/// Hash a sequence of string parts (NUL separated) into a u64.
pub fn hash_parts(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Short hex digest of arbitrary bytes, used for content-addressed ids.
pub fn short_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..6])
}

/// Derive a child seed from a parent seed and a stream label.
pub fn derive(seed: u64, stream: &str, index: u64) -> u64 {
    hash_parts(&[&seed.to_string(), stream, &index.to_string()])
}
