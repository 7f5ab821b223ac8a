//! Seeded PRNG used everywhere randomness appears.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Xoshiro256++ seeded through SplitMix64.
pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Environment variable consulted for the default seed of CLI commands.
pub const SEED_ENV: &str = "PACKENC_SEED";

pub fn default_seed() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}
