//! Deterministic seed derivation for replicates and their substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams owned by one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Function = 0,
    Noise = 1,
    Policy = 2,
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r` under `master`.
pub fn child_seed(master: u64, replicate: u64) -> u64 {
    mix(mix(master) ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// A ChaCha stream for one substream of one replicate.
pub fn stream(master: u64, replicate: u64, sub: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(master, replicate));
    rng.set_stream(sub as u64);
    rng
}
