//! Environment model: link functions, evaluator calibration, reward
//! distributions and the sampling of one round.
//!
//! Each evaluator `j` scores an arm with hidden reward `r` as
//! `g(alpha_j * r) + noise_j`, where `g` is a known strictly increasing link.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{std_normal_mass, std_normal_pdf, truncated_normal};

/// Logistic outputs are kept this far inside (0, 1) so the inverse stays finite.
pub const LOGISTIC_EDGE: f64 = 1e-12;

/// Half-width of the exclusion band used when truncating GLM evaluations.
pub const TRUNCATION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Logistic => "logistic",
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Logistic => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn inverse(self, y: f64) -> Result<f64> {
        match self {
            Link::Identity => Ok(y),
            Link::Logistic => {
                if y > 0.0 && y < 1.0 {
                    Ok(y.ln() - (-y).ln_1p())
                } else {
                    Err(Error::Domain { value: y, link: self.name() })
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => {
                let g = self.eval(x);
                g * (1.0 - g)
            }
        }
    }

    /// Infimum of `g'` over arguments with `|x| <= max_abs_arg`.
    pub fn slope_lower_bound(self, max_abs_arg: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => self.derivative(max_abs_arg.abs()),
        }
    }

    /// Pulls a value back into the open range of the link.
    pub fn clamp_to_range(self, y: f64) -> f64 {
        match self {
            Link::Identity => y,
            Link::Logistic => y.clamp(LOGISTIC_EDGE, 1.0 - LOGISTIC_EDGE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `N(0, sigma_j^2)` added to the evaluation.
    Gaussian,
    /// `N(0, 2 sigma_j^2)` truncated so the evaluation stays inside
    /// `[g(0) + 1e-6, g(alpha_j C) - 1e-6]`.
    TruncatedGaussian,
}

/// Row-major dense matrix. Rows are arms, columns are evaluators.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.get(i, j))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies the link inverse entry-wise.
    pub fn link_inverse(&self, link: Link) -> Result<Matrix> {
        if link == Link::Identity {
            return Ok(self.clone());
        }
        let data = self.data.iter().map(|&y| link.inverse(y)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }
}

/// Calibration of the `J` evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorModel {
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    link: Link,
    noise: NoiseKind,
}

impl EvaluatorModel {
    pub fn new(alpha: Vec<f64>, sigma: Vec<f64>, link: Link, noise: NoiseKind) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidArgument("at least one evaluator is required".into()));
        }
        if alpha.len() != sigma.len() {
            return Err(Error::InvalidArgument(format!(
                "alpha has {} entries but sigma has {}",
                alpha.len(),
                sigma.len()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument("alpha must be finite".into()));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidArgument("sigma must be finite and nonnegative".into()));
        }
        Ok(Self { alpha, sigma, link, noise })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise
    }

    pub fn num_evaluators(&self) -> usize {
        self.alpha.len()
    }

    /// True when every evaluator is noiseless.
    pub fn is_deterministic(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardKind {
    TruncatedGaussian { mu: f64, sd: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Takes value `scale` with probability `p`, zero otherwise.
    Bernoulli { p: f64, scale: f64 },
}

/// Reward distribution supported on `[0, C]` with cached first two moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardDistribution {
    kind: RewardKind,
    support: f64,
    mean: f64,
    second_moment: f64,
}

impl RewardDistribution {
    pub fn new(kind: RewardKind) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("reward distribution: {m}")));
        let (support, mean, second_moment) = match kind {
            RewardKind::TruncatedGaussian { mu, sd, lo, hi } => {
                if !(sd > 0.0 && sd.is_finite()) {
                    return bad("sd must be positive");
                }
                if !(lo >= 0.0 && hi > lo && hi.is_finite() && mu.is_finite()) {
                    return bad("need 0 <= lo < hi < inf");
                }
                let (m, v) = truncated_normal_moments(mu, sd, lo, hi);
                (hi, m, v + m * m)
            }
            RewardKind::Uniform { lo, hi } => {
                if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                    return bad("need 0 <= lo < hi < inf");
                }
                (hi, 0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0)
            }
            RewardKind::Bernoulli { p, scale } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad("p must lie in [0, 1]");
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad("scale must be positive");
                }
                (scale, p * scale, p * scale * scale)
            }
        };
        Ok(Self { kind, support, mean, second_moment })
    }

    pub fn kind(&self) -> RewardKind {
        self.kind
    }

    /// Upper end `C` of the support `[0, C]`.
    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `E[r^2]`.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RewardKind::TruncatedGaussian { mu, sd, lo, hi } => truncated_normal(rng, mu, sd, lo, hi),
            RewardKind::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            RewardKind::Bernoulli { p, scale } => {
                if rng.random::<f64>() < p {
                    scale
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// `E[g(alpha r)^2]`, by quadrature for the continuous kinds.
    pub fn expected_squared_link(&self, link: Link, alpha: f64) -> f64 {
        let f = |r: f64| link.eval(alpha * r).powi(2);
        match self.kind {
            RewardKind::Bernoulli { p, scale } => p * f(scale) + (1.0 - p) * f(0.0),
            RewardKind::Uniform { lo, hi } => simpson(f, lo, hi, 4096) / (hi - lo),
            RewardKind::TruncatedGaussian { mu, sd, lo, hi } => {
                let a = lo.max(mu - 12.0 * sd);
                let b = hi.min(mu + 12.0 * sd);
                let z = std_normal_mass((lo - mu) / sd, (hi - mu) / sd);
                simpson(|r| f(r) * std_normal_pdf((r - mu) / sd) / sd, a, b, 8192) / z
            }
        }
    }
}

fn truncated_normal_moments(mu: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let z = std_normal_mass(a, b);
    let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
    // b * pdf(b) is 0 in the limit b -> inf; guard the product for huge b.
    let bpb = if pb == 0.0 { 0.0 } else { b * pb };
    let apa = if pa == 0.0 { 0.0 } else { a * pa };
    let ratio = (pa - pb) / z;
    let mean = mu + sd * ratio;
    let var = sd * sd * (1.0 + (apa - bpb) / z - ratio * ratio);
    (mean, var.max(0.0))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Number of arms offered each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArmSchedule {
    Constant { arms: usize },
    /// Uniform draw in `(k, k_max]` every round.
    Uniform { k: usize, k_max: usize },
}

impl ArmSchedule {
    pub fn max_arms(&self) -> usize {
        match *self {
            ArmSchedule::Constant { arms } => arms,
            ArmSchedule::Uniform { k_max, .. } => k_max,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            ArmSchedule::Constant { arms } => arms,
            ArmSchedule::Uniform { k, k_max } => rng.random_range(k + 1..=k_max),
        }
    }
}

/// One round as produced by the environment. `rewards` must not be shown to
/// policies before selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundObservation {
    pub round: usize,
    pub rewards: Vec<f64>,
    pub evaluations: Matrix,
}

impl RoundObservation {
    pub fn num_arms(&self) -> usize {
        self.rewards.len()
    }
}

/// Samples evaluations for the given rewards. `support` is the reward bound
/// `C`, which sets the truncation window of the GLM noise.
pub fn generate_evaluations<R: Rng + ?Sized>(
    rewards: &[f64],
    model: &EvaluatorModel,
    support: f64,
    rng: &mut R,
) -> Matrix {
    let j_count = model.num_evaluators();
    let link = model.link();
    let mut phi = Matrix::zeros(rewards.len(), j_count);
    for (i, &r) in rewards.iter().enumerate() {
        let row = phi.row_mut(i);
        for (j, cell) in row.iter_mut().enumerate() {
            let alpha = model.alpha[j];
            let sigma = model.sigma[j];
            let clean = link.eval(alpha * r);
            let value = if sigma == 0.0 {
                clean
            } else {
                match model.noise {
                    NoiseKind::Gaussian => {
                        let z: f64 = StandardNormal.sample(rng);
                        clean + sigma * z
                    }
                    NoiseKind::TruncatedGaussian => {
                        let (g0, gc) = (link.eval(0.0), link.eval(alpha * support));
                        let lo = g0.min(gc) + TRUNCATION_MARGIN;
                        let hi = g0.max(gc) - TRUNCATION_MARGIN;
                        let sd = std::f64::consts::SQRT_2 * sigma;
                        if hi > lo {
                            truncated_normal(rng, clean, sd, lo, hi)
                        } else {
                            let z: f64 = StandardNormal.sample(rng);
                            clean + sd * z
                        }
                    }
                }
            };
            *cell = link.clamp_to_range(value);
        }
    }
    phi
}

/// The simulated environment shared by every policy of a run.
#[derive(Debug, Clone)]
pub struct Environment {
    pub rewards: RewardDistribution,
    pub model: EvaluatorModel,
    pub arms: ArmSchedule,
}

impl Environment {
    pub fn sample_round<R: Rng + ?Sized>(&self, round: usize, rng: &mut R) -> RoundObservation {
        let k_t = self.arms.draw(rng);
        let rewards = self.rewards.sample_n(k_t, rng);
        let evaluations = generate_evaluations(&rewards, &self.model, self.rewards.support(), rng);
        RoundObservation { round, rewards, evaluations }
    }
}

/// `k` distinct indices drawn uniformly from `0..n`, sorted ascending.
pub fn uniform_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut out = index::sample(rng, n, k.min(n)).into_vec();
    out.sort_unstable();
    out
}
