//! Seeded randomness helpers.
//!
//! Every stochastic step in the crate derives its generator from a user
//! seed plus a fixed purpose tag, so independent pipeline stages never share
//! or perturb each other's random streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic counter-based generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Build a generator from a raw seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent sub-seed from `(seed, tag)`.
///
/// SplitMix64 finalizer; changing either input decorrelates the stream.
pub fn subseed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for an independent sub-stream of `seed` identified by `tag`.
pub fn subrng(seed: u64, tag: u64) -> Rng {
    rng_from_seed(subseed(seed, tag))
}
