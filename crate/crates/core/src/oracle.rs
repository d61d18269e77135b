//! Oracle aggregation with known calibration, top-K ranking, suboptimality
//! gaps and the closed-form diagnostic bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Link, Matrix};

/// Noise levels below this are floored before dividing by `sigma^2`.
pub const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Glm,
    Linear,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Glm => "glm",
            Setting::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub setting: Setting,
    /// `<w, alpha> = 1` held within 1e-10 for the alpha it was built from.
    pub satisfies_constraint: bool,
}

/// Replaces noise levels below [`SIGMA_FLOOR`] by the floor.
pub fn floor_sigma(sigma: &[f64]) -> Vec<f64> {
    sigma
        .iter()
        .map(|&s| {
            if s < SIGMA_FLOOR {
                log::warn!("noise level {s} floored at {SIGMA_FLOOR}");
                SIGMA_FLOOR
            } else {
                s
            }
        })
        .collect()
}

/// `w_j = alpha_j / (sigma_j^2 ||alpha / sigma||^2)`, or `None` when
/// `alpha / sigma` vanishes.
///
/// Both the oracle and the learners build their weights through this map; a
/// learner simply plugs in its estimate of `alpha`.
pub fn normalized_weights(alpha: &[f64], sigma: &[f64]) -> Option<Vec<f64>> {
    let norm2: f64 = alpha.iter().zip(sigma).map(|(a, s)| (a / s).powi(2)).sum();
    if !(norm2 > 0.0 && norm2.is_finite()) {
        return None;
    }
    Some(alpha.iter().zip(sigma).map(|(a, s)| a / (s * s * norm2)).collect())
}

pub fn compute_oracle_weights(alpha: &[f64], sigma: &[f64], setting: Setting) -> Result<WeightVector> {
    if alpha.len() != sigma.len() || alpha.is_empty() {
        return Err(Error::InvalidArgument("alpha and sigma must have equal, nonzero length".into()));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::DegenerateModel("all calibration slopes are zero".into()));
    }
    let sigma = floor_sigma(sigma);
    let w = normalized_weights(alpha, &sigma)
        .ok_or_else(|| Error::DegenerateModel("alpha / sigma has zero or non-finite norm".into()))?;
    let constraint = dot(&w, alpha);
    Ok(WeightVector { satisfies_constraint: (constraint - 1.0).abs() < 1e-10, w, setting })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scores `<w, x_i>` for each row of an already link-inverted feature matrix.
pub fn scores(w: &[f64], features: &Matrix) -> Vec<f64> {
    features.iter_rows().map(|row| dot(w, row)).collect()
}

/// Reward estimates `<w, g^-1(phi_i)>`.
pub fn estimate_rewards(w: &[f64], phi: &Matrix, link: Link) -> Result<Vec<f64>> {
    if w.len() != phi.cols() {
        return Err(Error::InvalidArgument(format!(
            "weight length {} does not match {} evaluators",
            w.len(),
            phi.cols()
        )));
    }
    Ok(scores(w, &phi.link_inverse(link)?))
}

fn order_desc(scores: &[f64]) -> Vec<usize> {
    let key = |x: f64| if x.is_nan() { f64::NEG_INFINITY } else { x };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| key(scores[b]).total_cmp(&key(scores[a])).then(a.cmp(&b)));
    idx
}

/// Indices of the `k` largest scores, ties to the lowest index, returned in
/// ascending index order.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!("cannot select {k} of {} arms", scores.len())));
    }
    let mut sel = order_desc(scores);
    sel.truncate(k);
    sel.sort_unstable();
    Ok(sel)
}

fn best_k_sum(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.iter().take(k).sum()
}

/// True top-`k` reward minus the reward collected by `selected`.
pub fn suboptimality_gap(rewards: &[f64], selected: &[usize], k: usize) -> f64 {
    debug_assert_eq!(selected.len(), k);
    best_k_sum(rewards, k) - selected.iter().map(|&i| rewards[i]).sum::<f64>()
}

/// Score difference between the `k`-th and `(k+1)`-th ranked arm.
pub fn ranking_margin(scores: &[f64], k: usize) -> Option<f64> {
    if k == 0 || k >= scores.len() {
        return None;
    }
    let order = order_desc(scores);
    Some(scores[order[k - 1]] - scores[order[k]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBoundInputs {
    pub k: usize,
    pub k_max: usize,
    pub j: usize,
    pub delta: f64,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GapBoundInputs {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.delta > 0.0 && self.delta < 1.0) {
            errs.push(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.k >= 1 && self.k < self.k_max) {
            errs.push(format!("need 1 <= k < k_max, got k = {}, k_max = {}", self.k, self.k_max));
        }
        if self.alpha.len() != self.j || self.sigma.len() != self.j {
            errs.push(format!("alpha and sigma must have j = {} entries", self.j));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// `||alpha / sigma||`.
    pub fn snr_norm(&self) -> f64 {
        let sigma = floor_sigma(&self.sigma);
        self.alpha.iter().zip(&sigma).map(|(a, s)| (a / s).powi(2)).sum::<f64>().sqrt()
    }

    fn log_term(&self) -> f64 {
        (self.k_max as f64 * std::f64::consts::E / self.delta).ln()
    }
}

/// High-probability bound on the oracle's suboptimality gap.
pub fn oracle_gap_bound(inputs: &GapBoundInputs, setting: Setting) -> f64 {
    let k = inputs.k as f64;
    let concentration = 2.0 * k * inputs.log_term().sqrt();
    let numerator = match setting {
        Setting::Glm => concentration + k * (inputs.j as f64).sqrt(),
        Setting::Linear => concentration,
    };
    numerator / inputs.snr_norm()
}

/// The objective minimized by the oracle weights, evaluated at `w`.
pub fn weight_objective(w: &[f64], inputs: &GapBoundInputs, setting: Setting) -> f64 {
    let k = inputs.k as f64;
    let spread: f64 = w.iter().zip(&inputs.sigma).map(|(w, s)| (w * s).powi(2)).sum();
    let ell = (inputs.k_max as f64 / inputs.delta).ln();
    let first = 2.0 * (k.powi(3) * spread * ell).sqrt();
    match setting {
        Setting::Glm => first + k * (inputs.j as f64 * spread).sqrt(),
        Setting::Linear => first,
    }
}

/// Constants entering the regret bounds, reported for diagnostics only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// `Phi` with `||g||_inf = max_j max_{x in [0, C]} g(alpha_j x)`.
    pub phi: f64,
    /// `Phi` with `||g||_inf` replaced by the reward bound `C`.
    pub phi_support_variant: f64,
    pub s: f64,
    /// `Phi'` of the linear-case bound.
    pub phi_linear: f64,
    pub g_sup: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn compute_theory_constants(
    alpha: &[f64],
    sigma: &[f64],
    k: usize,
    k_max: usize,
    j: usize,
    delta: f64,
    support: f64,
    link: Link,
) -> TheoryConstants {
    let sigma = floor_sigma(sigma);
    let kf = k as f64;
    let jf = j as f64;
    let sigma_inf = sigma.iter().cloned().fold(0.0, f64::max);
    let g_sup = alpha
        .iter()
        .map(|&a| link.eval(0.0).max(link.eval(a * support)))
        .fold(f64::NEG_INFINITY, f64::max);

    let noise_part =
        2.0 * kf * sigma_inf * (2.0 * jf.sqrt() + (kf * (std::f64::consts::E * k_max as f64 / (kf * delta)).ln()).sqrt());
    let phi = noise_part + kf * g_sup;
    let phi_support_variant = noise_part + kf * support;

    let norm_by = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
        alpha.iter().zip(&sigma).map(|(&a, &s)| f(a, s).powi(2)).sum::<f64>().sqrt()
    };
    let a_over_s2 = norm_by(&|a, s| a / (s * s));
    let inv_s2 = norm_by(&|_, s| 1.0 / (s * s));
    let a_over_s = norm_by(&|a, s| a / s);
    let inv_s_4norm = sigma.iter().map(|s| s.powi(-4)).sum::<f64>().powf(0.25);
    let s = (a_over_s2 + inv_s2) * a_over_s2 / a_over_s.powi(4) + (inv_s_4norm / a_over_s).powi(2);

    let alpha_norm = norm2(alpha);
    let phi_linear = 2.0 * alpha_norm * support * (4.0 / delta).ln()
        + 2.0 * sigma_inf * (2.0 * jf.sqrt() + (kf * (k_max as f64 / (kf * delta)).ln()).sqrt());

    TheoryConstants { phi, phi_support_variant, s, phi_linear, g_sup }
}

/// Harmonic average of the per-round arm counts,
/// `T / sum_t (t - 1) / sum_{l < t} K_l`, where the first round contributes
/// `1 / K_1` so that a constant schedule averages to itself.
pub fn harmonic_mean_arms(arms: &[usize]) -> Option<f64> {
    let first = *arms.first()? as f64;
    let mut cumulative = 0.0;
    let mut denom = 1.0 / first;
    for t in 1..arms.len() {
        cumulative += arms[t - 1] as f64;
        denom += t as f64 / cumulative;
    }
    Some(arms.len() as f64 / denom)
}
