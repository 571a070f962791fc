//! Deterministic random streams derived from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of tags into a new seed. Distinct
/// tag sequences give unrelated streams.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| {
        splitmix64(acc ^ splitmix64(t))
    })
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
