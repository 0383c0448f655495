//! Seeded random number generation.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] whose seed is
//! derived from a run seed plus a small tuple of stream identifiers, so that
//! independent components (per-parameter init, per-round candidate sampling,
//! per-epoch shuffling) never share a stream and can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream identifiers into a new 64-bit seed.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub fn rng_for(seed: u64, stream: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}
