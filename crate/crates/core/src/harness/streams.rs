//! Independent random streams keyed by run and role.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; each role gets disjoint randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    /// Calibration slopes and noise levels of a run.
    Parameters,
    /// Rewards, arm counts and evaluations of a run.
    Environment,
    /// Internal randomness of the policy at the given index.
    Policy,
    /// Oracle-gap sweeps; the index encodes setting and evaluator count.
    Sweep,
}

impl StreamRole {
    fn code(self) -> u64 {
        match self {
            StreamRole::Parameters => 1,
            StreamRole::Environment => 2,
            StreamRole::Policy => 3,
            StreamRole::Sweep => 4,
        }
    }
}

/// Generator for `(master, run, role, index)`. Streams with distinct keys
/// never overlap, so adding a policy leaves environment draws untouched.
pub fn stream(master: u64, run: u64, role: StreamRole, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, word) in seed.chunks_exact_mut(8).zip([master, run, role.code(), index]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
