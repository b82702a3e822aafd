//! Seed derivation.
//!
//! A run is driven by one root seed. Each stage draws from its own stream,
//! `derive_seed(root, stage)`, defined as the first 8 bytes (little-endian)
//! of `SHA-256(root.to_le_bytes() || stage.as_bytes())`. A stage can thus be
//! rerun in isolation and reproduce exactly what the full pipeline did.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(root: u64, stage: &str) -> ChaCha8Rng {
    rng(derive_seed(root, stage))
}

/// Hex SHA-256 of arbitrary bytes, used to fingerprint source artifacts.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
