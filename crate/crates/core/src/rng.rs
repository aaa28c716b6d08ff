//! Seed derivation.
//!
//! Every random stream in the toolkit comes from one user seed mixed with a
//! module tag and an item index, so work items can run in any order (or in
//! parallel) and still reproduce the serial result.

use std::hash::Hasher;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed`, a stream `tag` and an item `index`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(tag.as_bytes());
    splitmix64(splitmix64(seed ^ h.finish()) ^ index)
}

/// Generator for item `index` of stream `tag`.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}
