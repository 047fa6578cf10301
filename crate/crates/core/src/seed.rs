//! Deterministic seed derivation.
//!
//! Every random stream in the crate is obtained from a master seed, a
//! component tag and an index, hashed with SHA-256. Two components with
//! different tags never share a stream, and the mapping is stable across
//! releases because it only depends on the hash function and the byte layout
//! below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 64-bit seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"rftrojan.seed.v1");
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    h.update(master.to_le_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(master, tag, index))`.
pub fn derived_rng(master: u64, tag: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, tag, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_inputs_same_seed() {
        assert_eq!(derive_seed(7, "train", 3), derive_seed(7, "train", 3));
    }

    #[test]
    fn tag_boundaries_are_unambiguous() {
        // "ab" + index must not collide with "a" + something else.
        assert_ne!(derive_seed(1, "ab", 0), derive_seed(1, "a", 0));
    }

    #[test]
    fn repetition_index_changes_seed() {
        let tags = ["sigsynth", "train.clean", "train.poisoned", "poison", "eval"];
        for tag in tags {
            assert_ne!(derive_seed(42, tag, 0), derive_seed(42, tag, 1));
        }
    }

    #[test]
    fn distinct_tags_never_collide_in_random_probes() {
        use rand::Rng as _;
        let mut rng = rng_from_seed(2024);
        for _ in 0..1_000_000 {
            let master: u64 = rng.random();
            let index: u64 = rng.random_range(0..64);
            assert_ne!(
                derive_seed(master, "data", index),
                derive_seed(master, "model", index)
            );
        }
    }
}
