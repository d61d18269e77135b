//! Closed-form diagnostic bounds for a configuration.

use rand::Rng;
use serde::Serialize;

use super::config::{ArmsMode, ExperimentConfig};
use super::run::draw_parameters;
use super::streams::{stream, StreamRole};
use crate::error::Result;
use crate::oracle::{
    compute_oracle_weights, compute_theory_constants, harmonic_mean_arms, oracle_gap_bound, GapBoundInputs, Setting,
    TheoryConstants,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub setting: Setting,
    pub k: usize,
    pub k_max: usize,
    pub j: usize,
    pub delta: f64,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub oracle_weights: Vec<f64>,
    /// Gap bound for the configured setting.
    pub gap_bound: f64,
    pub gap_bound_glm: f64,
    pub gap_bound_linear: f64,
    pub theory: TheoryConstants,
    pub reward_support: f64,
    pub reward_mean: f64,
    pub reward_second_moment: f64,
    /// `E[g(alpha_j r)^2]` per evaluator.
    pub expected_squared_link: Vec<f64>,
    /// Harmonic average arm count over the horizon.
    pub harmonic_mean_arms: f64,
}

/// Evaluates the bounds on the calibration of run 0.
pub fn print_bounds(cfg: &ExperimentConfig) -> Result<BoundsReport> {
    cfg.validate()?;
    let (alpha, sigma) = draw_parameters(cfg, 0);
    let inputs = GapBoundInputs { k: cfg.k, k_max: cfg.k_max, j: cfg.j, delta: cfg.delta, alpha, sigma };
    inputs.validate()?;
    let dist = cfg.reward_distribution()?;
    let link = cfg.link();
    let weights = compute_oracle_weights(&inputs.alpha, &inputs.sigma, cfg.setting)?.w;
    let theory = compute_theory_constants(
        &inputs.alpha,
        &inputs.sigma,
        cfg.k,
        cfg.k_max,
        cfg.j,
        cfg.delta,
        dist.support(),
        link,
    );
    let arms: Vec<usize> = match cfg.arms {
        ArmsMode::Constant => vec![cfg.k_max; cfg.horizon],
        ArmsMode::Uniform => {
            let mut rng = stream(cfg.seed, 0, StreamRole::Parameters, 1);
            (0..cfg.horizon).map(|_| rng.random_range(cfg.k + 1..=cfg.k_max)).collect()
        }
    };
    Ok(BoundsReport {
        setting: cfg.setting,
        k: cfg.k,
        k_max: cfg.k_max,
        j: cfg.j,
        delta: cfg.delta,
        gap_bound: oracle_gap_bound(&inputs, cfg.setting),
        gap_bound_glm: oracle_gap_bound(&inputs, Setting::Glm),
        gap_bound_linear: oracle_gap_bound(&inputs, Setting::Linear),
        theory,
        reward_support: dist.support(),
        reward_mean: dist.mean(),
        reward_second_moment: dist.second_moment(),
        expected_squared_link: inputs.alpha.iter().map(|&a| dist.expected_squared_link(link, a)).collect(),
        harmonic_mean_arms: harmonic_mean_arms(&arms).unwrap_or(f64::NAN),
        oracle_weights: weights,
        alpha: inputs.alpha,
        sigma: inputs.sigma,
    })
}
