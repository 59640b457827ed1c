//! Seed derivation. Every stochastic component draws from its own ChaCha
//! stream keyed by `(seed, tag, index)`, so parallel work never shares state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(tag)) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn stream(seed: u64, tag: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Deterministic hash of a lattice point to `[0, 1)`.
pub fn lattice_unit(seed: u64, x: i64, y: i64, channel: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((x as u64).wrapping_mul(0x9e37_79b9) ^ splitmix64(y as u64 ^ (channel << 48))));
    (h >> 11) as f64 / (1u64 << 53) as f64
}
