//! Seeded generators keyed by strings, so draws do not depend on iteration order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes.iter().chain(seed.to_le_bytes().iter()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn keyed_rng(key: &str, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(fnv1a(key.as_bytes(), seed))
}

/// Generator for one item of a stream, e.g. `(seed, epoch, step, index)`.
pub fn stream_rng(parts: &[u64]) -> ChaCha8Rng {
    let bytes: Vec<u8> = parts.iter().flat_map(|p| p.to_le_bytes()).collect();
    ChaCha8Rng::seed_from_u64(fnv1a(&bytes, 0x6b67))
}
