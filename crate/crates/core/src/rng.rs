//! Named random streams derived from one run seed.
//!
//! Every consumer of randomness gets its own ChaCha stream so that, for
//! instance, changing the batch size does not perturb exploration noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Exploration = 2,
    Sampling = 3,
    EnvNoise = 4,
    Workload = 5,
    Smoothing = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Seed for a stream-keyed consumer that needs a plain `u64` (the workload
/// jitter keys its own per-step streams off this).
pub fn derived_seed(seed: u64, which: Stream) -> u64 {
    use rand::RngCore;
    stream(seed, which).next_u64()
}

/// Environment seed for episode `episode` of the run seeded with `seed`.
/// Training and evaluation share it, so a static policy sees the same
/// episodes in both.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    use rand::RngCore;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1_000 + episode);
    rng.next_u64()
}
