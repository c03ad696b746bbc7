//! Deterministic seed derivation.
//!
//! Every run consumes exactly one user-facing seed. Components derive their
//! own streams from it by tag (and optional indices), so adding a consumer
//! never perturbs the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from `seed` and a component tag.
///
/// SplitMix64 over the tag bytes; stable across platforms and releases.
pub fn derive(seed: u64, tag: &str) -> u64 {
    let mut state = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &byte in tag.as_bytes() {
        state = mix(state ^ u64::from(byte));
    }
    mix(state)
}

/// Derive a child seed further specialized by indices (epoch, attempt,
/// particle, ...).
pub fn derive_indexed(seed: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut state = derive(seed, tag);
    for &index in indices {
        state = mix(state ^ index);
    }
    state
}

/// A seeded generator for the given stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
