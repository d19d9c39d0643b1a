//! Counter-based randomness: every draw is a pure function of a key, so
//! results do not depend on iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a sequence of integers into one 64-bit key.
pub fn keyed_u64(key: &[u64]) -> u64 {
    key.iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Uniform in `[0, 1)`.
pub fn keyed_uniform(key: &[u64]) -> f64 {
    (keyed_u64(key) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A stream generator seeded from `key`.
pub fn keyed_rng(key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(keyed_u64(key))
}
