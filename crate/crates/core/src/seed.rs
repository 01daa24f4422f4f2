//! Deterministic stream splitting.
//!
//! Every random draw in a run descends from one root seed. A child stream is
//! named by a label path (`"mobility"`, `"round"`, `3`, `"vehicle"`, `7`, ...);
//! its seed is the first eight bytes of `SHA-256(parent_seed || label)`. The
//! derivation is independent of the order in which children are created, so
//! parallel work never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { seed: root }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for a textual label.
    pub fn child(&self, label: &str) -> Self {
        self.derive(0x01, label.as_bytes())
    }

    /// Child stream for an index (round number, vehicle id, trial, ...).
    pub fn index(&self, i: u64) -> Self {
        self.derive(0x02, &i.to_le_bytes())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn derive(&self, tag: u8, payload: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([tag]);
        h.update(payload);
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        Self {
            seed: u64::from_le_bytes(bytes),
        }
    }
}
