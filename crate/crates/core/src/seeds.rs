//! Seed derivation. All randomness flows from one root seed through named
//! substreams so per-module determinism composes across the pipeline.

use sha2::{Digest, Sha256};

/// Derive a substream seed from a parent seed and a stream label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_be_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}
