//! Seeded random streams.
//!
//! Every random draw in a simulation comes from a [`ChaCha8Rng`] keyed by the
//! run seed, with a separate ChaCha stream id per consumer. ChaCha is
//! counter-based and platform independent, so a `(seed, stream)` pair
//! reproduces the same sequence on every build of this crate. Keeping contexts,
//! reward noise and agent randomisation on separate streams means two agents
//! run with the same seed see the same contexts and the same noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Contexts,
    Rewards,
    Agent,
    /// Fresh draws for Monte Carlo diagnostics, never shared with a run.
    Diagnostics,
    /// Structural draws made once per environment (realizable weights).
    Structure,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Contexts => 1,
            Stream::Rewards => 2,
            Stream::Agent => 3,
            Stream::Diagnostics => 4,
            Stream::Structure => 5,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Child seed for an indexed sub-task (one splitmix64 step), so sub-tasks
/// can run in any order without sharing a generator.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
