//! Regret and estimation-error accounting plus cross-run confidence bands.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{Link, Matrix};
use crate::oracle::{estimate_rewards, top_k};

/// `z` for the default two-sided 95% band.
pub const Z_975: f64 = 1.959964;

/// Shortfall of `selected` against the oracle's own top-`k`, both measured
/// in oracle reward estimates. Never negative.
pub fn relative_regret_increment(w_plus: &[f64], phi: &Matrix, link: Link, selected: &[usize], k: usize) -> Result<f64> {
    let r_hat = estimate_rewards(w_plus, phi, link)?;
    let best = top_k(&r_hat, k)?;
    Ok(relative_regret_from_estimates(&r_hat, &best, selected))
}

/// Same as [`relative_regret_increment`] with precomputed estimates and
/// oracle set.
pub fn relative_regret_from_estimates(r_hat: &[f64], oracle_selected: &[usize], selected: &[usize]) -> f64 {
    let best: f64 = oracle_selected.iter().map(|&i| r_hat[i]).sum();
    let got: f64 = selected.iter().map(|&i| r_hat[i]).sum();
    (best - got).max(0.0)
}

/// Shortfall in true rewards against the oracle's selection; can be negative.
pub fn absolute_regret_increment(rewards: &[f64], selected: &[usize], oracle_selected: &[usize]) -> f64 {
    let best: f64 = oracle_selected.iter().map(|&i| rewards[i]).sum();
    best - selected.iter().map(|&i| rewards[i]).sum::<f64>()
}

pub fn estimation_error(alpha_hat: &[f64], alpha_ref: &[f64]) -> f64 {
    alpha_hat.iter().zip(alpha_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Pointwise mean and half-width of a normal-approximation band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub level: f64,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

fn z_for(level: f64) -> f64 {
    if (level - 0.95).abs() < 1e-12 {
        Z_975
    } else {
        Normal::standard().inverse_cdf(0.5 + level / 2.0)
    }
}

pub fn aggregate_ci(series: &[Vec<f64>], level: f64) -> Result<ConfidenceBand> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument("confidence band needs at least two runs".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidArgument("runs have different lengths".into()));
    }
    let n = series.len() as f64;
    let z = z_for(level);
    let mut mean = Vec::with_capacity(len);
    let mut half_width = Vec::with_capacity(len);
    for t in 0..len {
        let m = series.iter().map(|s| s[t]).sum::<f64>() / n;
        let var = series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        half_width.push(z * var.sqrt() / n.sqrt());
    }
    Ok(ConfidenceBand { level, mean, half_width })
}

/// Per-round accounting for one policy in one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub policy: String,
    pub run: usize,
    pub rel_regret: Vec<f64>,
    pub abs_regret: Vec<f64>,
    /// `NaN` for policies that keep no slope estimate.
    pub est_error: Vec<f64>,
    /// True-reward shortfall of the selection against the true top-`k`.
    pub gap: Vec<f64>,
    /// Oracle score difference between ranks `k` and `k + 1`.
    pub oracle_margin: Vec<f64>,
    pub selected: Vec<Vec<usize>>,
    pub oracle_selected: Vec<Vec<usize>>,
    /// Hex digest of every evaluation matrix the policy was shown.
    pub phi_digest: String,
}

/// Everything measured in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub rel_regret: f64,
    pub abs_regret: f64,
    pub est_error: f64,
    pub gap: f64,
    pub oracle_margin: f64,
    pub selected: Vec<usize>,
    pub oracle_selected: Vec<usize>,
}

impl RunTrace {
    pub fn new(policy: impl Into<String>, run: usize) -> Self {
        Self { policy: policy.into(), run, ..Default::default() }
    }

    pub fn push(&mut self, r: RoundRecord) {
        self.rel_regret.push(r.rel_regret);
        self.abs_regret.push(r.abs_regret);
        self.est_error.push(r.est_error);
        self.gap.push(r.gap);
        self.oracle_margin.push(r.oracle_margin);
        self.selected.push(r.selected);
        self.oracle_selected.push(r.oracle_selected);
    }

    pub fn len(&self) -> usize {
        self.rel_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rel_regret.is_empty()
    }

    pub fn rel_regret_cum(&self) -> Vec<f64> {
        cumulative(&self.rel_regret)
    }

    pub fn abs_regret_cum(&self) -> Vec<f64> {
        cumulative(&self.abs_regret)
    }
}

pub fn cumulative(increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Log-log slope of a per-round series (round numbers start at 1) over the
/// rounds after `start_fraction` of the horizon, ignoring nonpositive values.
pub fn loglog_slope(series: &[f64], start_fraction: f64) -> Option<f64> {
    let start = ((series.len() as f64) * start_fraction).floor() as usize;
    let points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .skip(start)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(t, &y)| (((t + 1) as f64).ln(), y.ln()))
        .collect();
    ls_slope(&points)
}

/// Growth exponent of a cumulative regret curve, fit over the last half of
/// the horizon.
pub fn growth_exponent(cumulative_regret: &[f64]) -> Option<f64> {
    loglog_slope(cumulative_regret, 0.5)
}
