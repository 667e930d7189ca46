//! Deterministic RNG derivation.
//!
//! Every random stream is keyed by the run seed plus a list of labels
//! (purpose, sample id, epoch, ...), so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3)
    })
}

/// Mixes a seed with a sequence of labels into a new 64-bit seed.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, l| splitmix64(acc ^ fnv1a(l.as_bytes())))
}

pub fn rng_from(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
