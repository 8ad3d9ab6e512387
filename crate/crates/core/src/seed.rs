//! Labeled seed derivation.
//!
//! Every stochastic consumer in a run draws from its own stream keyed by
//! `(root seed, label, index)`, so results do not depend on the order in
//! which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed, a label and an index into a new 64-bit seed.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for chunk in label.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(buf));
    }
    h = splitmix64(h ^ label.len() as u64);
    splitmix64(h ^ index)
}

/// A deterministic RNG for the stream `(root, label, index)`.
pub fn stream(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}
