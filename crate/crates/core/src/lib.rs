//! Bandit selection driven by noisy, differently calibrated evaluators.
//!
//! Arms are scored by several evaluators whose outputs are monotone in the
//! hidden reward; policies learn how to weight evaluators while picking
//! `k` arms per round.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod sampling;

pub use error::{Error, Result};
pub use model::{EvaluatorModel, Link, Matrix, NoiseKind, RewardDistribution, RewardKind};
pub use oracle::{compute_oracle_weights, oracle_gap_bound, Setting, WeightVector};
pub use policies::{Policy, PolicyConfig, PolicySpec};
