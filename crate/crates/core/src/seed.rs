//! Seed derivation.
//!
//! Every random stream in the toolkit is a `ChaCha8Rng` seeded from a root
//! seed mixed with string and integer tags. Tags are hashed with FNV-1a and
//! folded into the state with the SplitMix64 finalizer, so a task's seed
//! depends only on its identity and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Incremental seed builder: `SeedMixer::new(root).str("cfg").int(3).finish()`.
#[derive(Debug, Clone, Copy)]
pub struct SeedMixer(u64);

impl SeedMixer {
    pub fn new(root: u64) -> Self {
        SeedMixer(mix64(root))
    }

    pub fn str(self, tag: &str) -> Self {
        SeedMixer(mix64(self.0 ^ fnv1a(tag.as_bytes())))
    }

    pub fn int(self, value: u64) -> Self {
        SeedMixer(mix64(self.0 ^ mix64(value)))
    }

    pub fn finish(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
