//! Seed derivation.
//!
//! All randomness flows from one user seed. Sub-seeds are derived with
//! [`mix`], a SplitMix64 finalizer applied to `parent ^ finalize(tag)`, so a
//! node's seed depends only on its position in the tree and never on the
//! order in which nodes are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a tag.
pub fn mix(parent: u64, tag: u64) -> u64 {
    finalize(parent ^ finalize(tag.wrapping_add(GOLDEN)))
}

/// Seed of the child on `side` (0 = left, 1 = right) of a node at `depth`.
pub fn child_seed(parent: u64, depth: usize, side: u8) -> u64 {
    mix(mix(parent, depth as u64), 0x10 | side as u64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Tags used when one node seed feeds several consumers.
pub(crate) const TAG_MAX_VARIANT: u64 = 0xA1;
pub(crate) const TAG_MIN_VARIANT: u64 = 0xA2;
pub(crate) const TAG_FALLBACK: u64 = 0xB0;
