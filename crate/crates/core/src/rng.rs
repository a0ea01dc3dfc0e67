//! Seedable random streams.
//!
//! Every consumer of randomness owns a stream derived from the run's base seed
//! and a tuple of coordinates, so any rollout can be replayed in isolation.

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

pub type Stream = ChaCha8Rng;

/// Stream purposes, used as the first coordinate of [`derive_stream`].
pub mod purpose {
    pub const ENV: u64 = 1;
    pub const POLICY_INIT: u64 = 2;
    pub const ROLLOUT: u64 = 3;
    pub const COMMIT: u64 = 4;
    pub const BASELINE: u64 = 5;
    pub const GENERATOR: u64 = 6;
    pub const PROMPTS: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic stream for `(base_seed, coords...)`.
pub fn derive_stream(base_seed: u64, coords: &[u64]) -> Stream {
    let mut seed = [0u8; 32];
    let mut h = splitmix64(base_seed);
    for &c in coords {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    for chunk in seed.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    Stream::from_seed(seed)
}

/// Stream for rollout `rollout` of GRPO iteration `iteration` while training scene `scene`.
pub fn rollout_stream(base_seed: u64, scene: usize, iteration: usize, rollout: usize) -> Stream {
    derive_stream(
        base_seed,
        &[purpose::ROLLOUT, scene as u64, iteration as u64, rollout as u64],
    )
}
