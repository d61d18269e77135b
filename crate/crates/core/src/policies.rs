//! Bandit policies behind one select/update interface.
//!
//! A policy sees the evaluation matrix of the round, returns `k` distinct arm
//! indices, and is then told the rewards of exactly those arms.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{mle_glm_1d, shrink_alpha, solve_kkt_lambda, MleDataset, StreamingMean, UcbEstimatorState};
use crate::model::{uniform_subset, Link, Matrix};
use crate::oracle::{dot, floor_sigma, norm2, normalized_weights, scores, top_k};

/// What a policy's `alpha_estimate` is meant to approximate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateTarget {
    /// The calibration slopes themselves.
    Alpha,
    /// `E[r] * alpha`, the mean evaluation.
    MeanScaledAlpha,
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Chooses `k` distinct arms from the rows of `phi`. Rewards are not
    /// available here.
    fn select(&mut self, phi: &Matrix, k: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>>;

    /// Feedback for the arms returned by the last `select`; `rewards[n]`
    /// belongs to `selected[n]`.
    fn update(&mut self, phi: &Matrix, selected: &[usize], rewards: &[f64]) -> Result<()>;

    fn alpha_estimate(&self) -> Option<Vec<f64>> {
        None
    }

    fn estimate_target(&self) -> EstimateTarget {
        EstimateTarget::Alpha
    }

    /// Current aggregation weights, when the policy has any.
    fn weights(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Fixed inputs every policy may rely on.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub link: Link,
    /// Known noise levels; floored at construction.
    pub sigma: Vec<f64>,
    pub horizon: usize,
    pub delta: f64,
    /// Reward bound `C`.
    pub support: f64,
    /// Oracle weights, when the calibration is known.
    pub oracle_weights: Option<Vec<f64>>,
}

impl PolicyContext {
    pub fn num_evaluators(&self) -> usize {
        self.sigma.len()
    }
}

fn weights_or_zero(alpha: &[f64], sigma: &[f64]) -> Vec<f64> {
    normalized_weights(alpha, sigma).unwrap_or_else(|| vec![0.0; alpha.len()])
}

/// Exploration probability as a function of the round and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub scale: f64,
    pub exponent: f64,
    /// Use the current round instead of the horizon as the base.
    pub anytime: bool,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { scale: 1.0, exponent: -1.0 / 3.0, anytime: false }
    }
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        Self { scale: eps, exponent: 0.0, anytime: false }
    }

    pub fn value(&self, round: usize, horizon: usize) -> f64 {
        let base = if self.anytime { round.max(1) } else { horizon.max(1) } as f64;
        (self.scale * base.powf(self.exponent)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Only exploration rounds feed the likelihood.
    #[default]
    ExplorationOnly,
    /// Every round feeds the likelihood.
    All,
}

/// Known-calibration reference policy.
pub struct OraclePolicy {
    link: Link,
    weights: Vec<f64>,
}

impl OraclePolicy {
    pub fn new(link: Link, weights: Vec<f64>) -> Self {
        Self { link, weights }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &str {
        "oracle"
    }

    fn select(&mut self, phi: &Matrix, k: usize, _rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        top_k(&scores(&self.weights, &phi.link_inverse(self.link)?), k)
    }

    fn update(&mut self, _: &Matrix, _: &[usize], _: &[f64]) -> Result<()> {
        Ok(())
    }

    fn weights(&self) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }
}

/// Ranks arms by the plain average of the raw evaluations.
pub struct AverageScore;

impl Policy for AverageScore {
    fn name(&self) -> &str {
        "average"
    }

    fn select(&mut self, phi: &Matrix, k: usize, _rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        let means: Vec<f64> = phi.iter_rows().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        top_k(&means, k)
    }

    fn update(&mut self, _: &Matrix, _: &[usize], _: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Epsilon-greedy on per-evaluator likelihood estimates.
///
/// With [`SampleMode::ExplorationOnly`] this is the decoupled estimator whose
/// samples never depend on the evaluation noise; [`SampleMode::All`] also
/// learns from greedy rounds, and with `epsilon = 0` it is the plain greedy
/// baseline.
pub struct EpsilonGreedy {
    label: String,
    link: Link,
    sigma: Vec<f64>,
    horizon: usize,
    schedule: EpsilonSchedule,
    mode: SampleMode,
    datasets: Vec<MleDataset>,
    alpha_hat: Vec<f64>,
    weights: Vec<f64>,
    round: usize,
    explored: bool,
    exploration_rounds: usize,
    resolve_every: usize,
    pending: usize,
}

impl EpsilonGreedy {
    pub fn new(
        label: impl Into<String>,
        ctx: &PolicyContext,
        schedule: EpsilonSchedule,
        mode: SampleMode,
        lambda: Option<f64>,
        resolve_every: usize,
    ) -> Self {
        let j = ctx.num_evaluators();
        let lambda = lambda.unwrap_or(1.0 / j as f64);
        Self {
            label: label.into(),
            link: ctx.link,
            sigma: ctx.sigma.clone(),
            horizon: ctx.horizon,
            schedule,
            mode,
            datasets: (0..j).map(|_| MleDataset::new(lambda)).collect(),
            alpha_hat: vec![0.0; j],
            weights: vec![0.0; j],
            round: 0,
            explored: false,
            exploration_rounds: 0,
            resolve_every: resolve_every.max(1),
            pending: 0,
        }
    }

    pub fn dataset_len(&self) -> usize {
        self.datasets.first().map_or(0, MleDataset::len)
    }

    pub fn exploration_rounds(&self) -> usize {
        self.exploration_rounds
    }

    /// Overrides the current weights, e.g. to start from known values.
    pub fn set_weights(&mut self, weights: Vec<f64>) {
        self.weights = weights;
    }

    fn resolve(&mut self) -> Result<()> {
        for (a, data) in self.alpha_hat.iter_mut().zip(&self.datasets) {
            *a = mle_glm_1d(data, self.link)?.estimate;
        }
        self.weights = weights_or_zero(&self.alpha_hat, &self.sigma);
        Ok(())
    }
}

impl Policy for EpsilonGreedy {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, phi: &Matrix, k: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        self.round += 1;
        let eps = self.schedule.value(self.round, self.horizon);
        self.explored = rng.random::<f64>() < eps;
        if self.explored {
            self.exploration_rounds += 1;
            if k > phi.rows() {
                return Err(Error::InvalidArgument(format!("cannot select {k} of {} arms", phi.rows())));
            }
            return Ok(uniform_subset(rng, phi.rows(), k));
        }
        top_k(&scores(&self.weights, &phi.link_inverse(self.link)?), k)
    }

    fn update(&mut self, phi: &Matrix, selected: &[usize], rewards: &[f64]) -> Result<()> {
        if !(self.explored || self.mode == SampleMode::All) {
            return Ok(());
        }
        for (&i, &r) in selected.iter().zip(rewards) {
            for (data, &y) in self.datasets.iter_mut().zip(phi.row(i)) {
                data.push(r, y);
            }
        }
        self.pending += 1;
        if self.pending >= self.resolve_every {
            self.pending = 0;
            self.resolve()?;
        }
        Ok(())
    }

    fn alpha_estimate(&self) -> Option<Vec<f64>> {
        Some(self.alpha_hat.clone())
    }

    fn weights(&self) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }
}

/// Greedy on weights built from the running mean of all evaluations.
///
/// The mean evaluation is proportional to `alpha` in the linear model, so its
/// weights rank arms like the oracle without ever using rewards. Under a
/// non-identity link the same machinery runs on `g^-1(phi)`.
pub struct Esag {
    label: String,
    link: Link,
    sigma: Vec<f64>,
    mean: StreamingMean,
    alpha_hat: Vec<f64>,
    weights: Vec<f64>,
}

impl Esag {
    pub fn new(label: impl Into<String>, ctx: &PolicyContext) -> Self {
        let j = ctx.num_evaluators();
        Self {
            label: label.into(),
            link: ctx.link,
            sigma: ctx.sigma.clone(),
            mean: StreamingMean::new(j),
            alpha_hat: vec![0.0; j],
            weights: vec![0.0; j],
        }
    }

    pub fn samples_seen(&self) -> usize {
        self.mean.count()
    }
}

impl Policy for Esag {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, phi: &Matrix, k: usize, _rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        top_k(&scores(&self.weights, &phi.link_inverse(self.link)?), k)
    }

    fn update(&mut self, phi: &Matrix, _selected: &[usize], _rewards: &[f64]) -> Result<()> {
        self.mean.update(&phi.link_inverse(self.link)?);
        if let Some(m) = self.mean.mean() {
            self.alpha_hat = m;
        }
        self.weights = weights_or_zero(&self.alpha_hat, &self.sigma);
        Ok(())
    }

    fn alpha_estimate(&self) -> Option<Vec<f64>> {
        Some(self.alpha_hat.clone())
    }

    fn estimate_target(&self) -> EstimateTarget {
        EstimateTarget::MeanScaledAlpha
    }

    fn weights(&self) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }
}

/// Optimistic weights from the worst-case slope inside a confidence ball
/// around the ratio estimate `sum g^-1(phi) / sum r`.
pub struct EvalBasedUcb {
    label: String,
    link: Link,
    sigma: Vec<f64>,
    delta: f64,
    state: UcbEstimatorState,
    weights: Vec<f64>,
}

impl EvalBasedUcb {
    pub fn new(label: impl Into<String>, ctx: &PolicyContext, delta: Option<f64>) -> Self {
        let j = ctx.num_evaluators();
        Self {
            label: label.into(),
            link: ctx.link,
            sigma: ctx.sigma.clone(),
            delta: delta.unwrap_or(ctx.delta),
            state: UcbEstimatorState::new(j),
            weights: vec![0.0; j],
        }
    }

    /// Weights for the next round given the current statistics, or `None`
    /// before any reward has been observed.
    pub fn optimistic_weights(&self, k: usize) -> Result<Option<Vec<f64>>> {
        let Some(alpha_hat) = self.state.alpha_hat() else {
            return Ok(None);
        };
        let beta = self.state.beta(&self.sigma, k, self.delta);
        let alpha = if norm2(&alpha_hat) <= beta {
            alpha_hat
        } else {
            let lambda = solve_kkt_lambda(&alpha_hat, &self.sigma, beta)?;
            shrink_alpha(&alpha_hat, &self.sigma, beta, lambda)
        };
        Ok(Some(weights_or_zero(&alpha, &self.sigma)))
    }
}

impl Policy for EvalBasedUcb {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, phi: &Matrix, k: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        match self.optimistic_weights(k)? {
            None => {
                if k > phi.rows() {
                    return Err(Error::InvalidArgument(format!("cannot select {k} of {} arms", phi.rows())));
                }
                Ok(uniform_subset(rng, phi.rows(), k))
            }
            Some(w) => {
                self.weights = w;
                top_k(&scores(&self.weights, &phi.link_inverse(self.link)?), k)
            }
        }
    }

    fn update(&mut self, phi: &Matrix, selected: &[usize], rewards: &[f64]) -> Result<()> {
        let features = selected
            .iter()
            .map(|&i| phi.row(i).iter().map(|&y| self.link.inverse(y)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        self.state.update(features.iter().map(Vec::as_slice), rewards);
        Ok(())
    }

    fn alpha_estimate(&self) -> Option<Vec<f64>> {
        Some(self.state.alpha_hat().unwrap_or_else(|| vec![0.0; self.sigma.len()]))
    }

    fn weights(&self) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix
/// stored row-major, or `None` if it is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|p| l[i * n + p] * y[p]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    y
}

fn backward_solve(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|p| l[p * n + i] * x[p]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}

/// Optimistic ridge regression of rewards on `g^-1(phi)` features.
pub struct LinUcb {
    label: String,
    link: Link,
    dim: usize,
    regularization: f64,
    gram: Vec<f64>,
    response: Vec<f64>,
    noise_scale: f64,
    theta_bound: f64,
    delta: f64,
    fixed_radius: Option<f64>,
}

impl LinUcb {
    pub fn new(
        label: impl Into<String>,
        ctx: &PolicyContext,
        regularization: f64,
        theta_bound: f64,
        delta: Option<f64>,
        fixed_radius: Option<f64>,
    ) -> Self {
        let dim = ctx.num_evaluators();
        let mut gram = vec![0.0; dim * dim];
        for i in 0..dim {
            gram[i * dim + i] = regularization;
        }
        Self {
            label: label.into(),
            link: ctx.link,
            dim,
            regularization,
            gram,
            response: vec![0.0; dim],
            noise_scale: ctx.sigma.iter().cloned().fold(0.0, f64::max),
            theta_bound,
            delta: delta.unwrap_or(ctx.delta),
            fixed_radius,
        }
    }

    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    fn factor(&self) -> Result<Vec<f64>> {
        cholesky(&self.gram, self.dim).ok_or_else(|| Error::DegenerateEstimate("Gram matrix lost positive definiteness".into()))
    }

    pub fn theta(&self) -> Result<Vec<f64>> {
        let l = self.factor()?;
        Ok(backward_solve(&l, self.dim, &forward_solve(&l, self.dim, &self.response)))
    }

    /// Self-normalized confidence radius for the current design.
    pub fn radius(&self) -> Result<f64> {
        if let Some(r) = self.fixed_radius {
            return Ok(r);
        }
        let l = self.factor()?;
        let log_det: f64 = (0..self.dim).map(|i| 2.0 * l[i * self.dim + i].ln()).sum();
        let log_det_ratio = log_det - self.dim as f64 * self.regularization.ln();
        Ok(self.noise_scale * (2.0 * (1.0 / self.delta).ln() + log_det_ratio).sqrt()
            + self.regularization.sqrt() * self.theta_bound)
    }

    pub fn optimistic_scores(&self, features: &Matrix) -> Result<Vec<f64>> {
        let l = self.factor()?;
        let theta = backward_solve(&l, self.dim, &forward_solve(&l, self.dim, &self.response));
        let radius = self.radius()?;
        Ok(features
            .iter_rows()
            .map(|x| {
                let z = forward_solve(&l, self.dim, x);
                dot(&theta, x) + radius * norm2(&z)
            })
            .collect())
    }
}

impl Policy for LinUcb {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, phi: &Matrix, k: usize, _rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        top_k(&self.optimistic_scores(&phi.link_inverse(self.link)?)?, k)
    }

    fn update(&mut self, phi: &Matrix, selected: &[usize], rewards: &[f64]) -> Result<()> {
        let n = self.dim;
        for (&i, &r) in selected.iter().zip(rewards) {
            let x = phi.row(i).iter().map(|&y| self.link.inverse(y)).collect::<Result<Vec<_>>>()?;
            for a in 0..n {
                for b in 0..n {
                    self.gram[a * n + b] += x[a] * x[b];
                }
                self.response[a] += r * x[a];
            }
        }
        Ok(())
    }

    fn weights(&self) -> Option<Vec<f64>> {
        self.theta().ok()
    }
}

/// Exp4.P with one expert per evaluator plus a uniform expert.
///
/// Evaluator `j` advises a point mass on its top arm under `g^-1`. `k` arms
/// are drawn without replacement from the exploration-floored mixture.
pub struct Exp4P {
    label: String,
    link: Link,
    horizon: usize,
    support: f64,
    delta: f64,
    p_min: Option<f64>,
    log_weights: Vec<f64>,
    last_probs: Vec<f64>,
    last_advice: Vec<usize>,
    last_p_min: f64,
}

impl Exp4P {
    pub fn new(label: impl Into<String>, ctx: &PolicyContext, p_min: Option<f64>, delta: Option<f64>) -> Self {
        Self {
            label: label.into(),
            link: ctx.link,
            horizon: ctx.horizon.max(1),
            support: ctx.support,
            delta: delta.unwrap_or(ctx.delta),
            p_min,
            log_weights: vec![0.0; ctx.num_evaluators() + 1],
            last_probs: Vec::new(),
            last_advice: Vec::new(),
            last_p_min: 0.0,
        }
    }

    fn num_experts(&self) -> usize {
        self.log_weights.len()
    }

    /// Normalized expert weights; the last entry is the uniform expert.
    pub fn expert_weights(&self) -> Vec<f64> {
        let m = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// Advice distribution of expert `e` over `arms` arms.
    pub fn advice(&self, e: usize, arms: usize) -> Vec<f64> {
        let mut q = vec![0.0; arms];
        if e + 1 == self.num_experts() {
            q.fill(1.0 / arms as f64);
        } else if let Some(&top) = self.last_advice.get(e) {
            q[top] = 1.0;
        }
        q
    }

    fn floor_for(&self, arms: usize) -> f64 {
        let n = self.num_experts() as f64;
        let default = (n.ln() / (arms as f64 * self.horizon as f64)).sqrt();
        self.p_min.unwrap_or(default).clamp(0.0, 1.0 / arms as f64)
    }

    /// Arm distribution for the round whose evaluations are `phi`.
    pub fn arm_distribution(&mut self, phi: &Matrix) -> Result<Vec<f64>> {
        let arms = phi.rows();
        let features = phi.link_inverse(self.link)?;
        self.last_advice = (0..phi.cols())
            .map(|j| top_k(&features.column(j).collect::<Vec<_>>(), 1).map(|v| v[0]))
            .collect::<Result<Vec<_>>>()?;
        let p_min = self.floor_for(arms);
        let weights = self.expert_weights();
        let mut p = vec![0.0; arms];
        for (e, we) in weights.iter().enumerate() {
            for (pi, q) in p.iter_mut().zip(self.advice(e, arms)) {
                *pi += we * q;
            }
        }
        for pi in p.iter_mut() {
            *pi = (1.0 - arms as f64 * p_min) * *pi + p_min;
        }
        self.last_p_min = p_min;
        self.last_probs = p.clone();
        Ok(p)
    }
}

fn sample_without_replacement(rng: &mut dyn RngCore, probs: &[f64], k: usize) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(probs.len()) {
        let total: f64 = remaining.iter().map(|(_, p)| p).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, &(_, p)) in remaining.iter().enumerate() {
            if u < p {
                pick = pos;
                break;
            }
            u -= p;
        }
        out.push(remaining.swap_remove(pick).0);
    }
    out.sort_unstable();
    out
}

impl Policy for Exp4P {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, phi: &Matrix, k: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        if k > phi.rows() {
            return Err(Error::InvalidArgument(format!("cannot select {k} of {} arms", phi.rows())));
        }
        let p = self.arm_distribution(phi)?;
        Ok(sample_without_replacement(rng, &p, k))
    }

    fn update(&mut self, phi: &Matrix, selected: &[usize], rewards: &[f64]) -> Result<()> {
        let arms = phi.rows();
        let k = selected.len() as f64;
        let mut gain = vec![0.0; arms];
        for (&i, &r) in selected.iter().zip(rewards) {
            let inclusion = (k * self.last_probs[i]).min(1.0);
            gain[i] = (r / self.support).clamp(0.0, 1.0) / inclusion;
        }
        let n = self.num_experts() as f64;
        let bonus_scale = ((n / self.delta).ln() / (arms as f64 * self.horizon as f64)).sqrt();
        let step = self.last_p_min / 2.0;
        for e in 0..self.num_experts() {
            let q = self.advice(e, arms);
            let y_hat = dot(&q, &gain);
            let v_hat: f64 = q.iter().zip(&self.last_probs).map(|(q, p)| q / p).sum();
            self.log_weights[e] += step * (y_hat + v_hat * bonus_scale);
        }
        Ok(())
    }

    fn weights(&self) -> Option<Vec<f64>> {
        Some(self.expert_weights())
    }
}

/// Ranks by a single evaluator drawn uniformly each round.
pub struct RandomEvaluator {
    link: Link,
    last_evaluator: Option<usize>,
}

impl RandomEvaluator {
    pub fn new(ctx: &PolicyContext) -> Self {
        Self { link: ctx.link, last_evaluator: None }
    }

    pub fn last_evaluator(&self) -> Option<usize> {
        self.last_evaluator
    }
}

impl Policy for RandomEvaluator {
    fn name(&self) -> &str {
        "rand"
    }

    fn select(&mut self, phi: &Matrix, k: usize, rng: &mut dyn RngCore) -> Result<Vec<usize>> {
        let j = rng.random_range(0..phi.cols());
        self.last_evaluator = Some(j);
        let column = phi.column(j).map(|y| self.link.inverse(y)).collect::<Result<Vec<_>>>()?;
        top_k(&column, k)
    }

    fn update(&mut self, _: &Matrix, _: &[usize], _: &[f64]) -> Result<()> {
        Ok(())
    }
}

fn default_one() -> usize {
    1
}

fn default_regularization() -> f64 {
    1.0
}

/// Serializable description of a policy and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Oracle,
    Average,
    EpsGreedy {
        #[serde(default)]
        samples: SampleMode,
        #[serde(default)]
        epsilon: EpsilonSchedule,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_one")]
        resolve_every: usize,
    },
    Greedy {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_one")]
        resolve_every: usize,
    },
    Esag,
    EvalBasedUcb {
        #[serde(default)]
        delta: Option<f64>,
    },
    LinUcb {
        #[serde(default = "default_regularization")]
        regularization: f64,
        #[serde(default = "default_regularization")]
        theta_bound: f64,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default)]
        radius: Option<f64>,
    },
    Exp4p {
        #[serde(default)]
        p_min: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
    Rand,
}

impl PolicySpec {
    pub const NAMES: [&'static str; 10] = [
        "oracle",
        "average",
        "eps_greedy",
        "eps_greedy_all",
        "greedy",
        "esag",
        "eval_based_ucb",
        "lin_ucb",
        "exp4p",
        "rand",
    ];

    /// Spec with default hyperparameters for one of [`Self::NAMES`].
    pub fn from_name(name: &str) -> Result<Self> {
        let eps = |samples| PolicySpec::EpsGreedy {
            samples,
            epsilon: EpsilonSchedule::default(),
            lambda: None,
            resolve_every: 1,
        };
        Ok(match name {
            "oracle" => PolicySpec::Oracle,
            "average" => PolicySpec::Average,
            "eps_greedy" => eps(SampleMode::ExplorationOnly),
            "eps_greedy_all" => eps(SampleMode::All),
            "greedy" => PolicySpec::Greedy { lambda: None, resolve_every: 1 },
            "esag" => PolicySpec::Esag,
            "eval_based_ucb" => PolicySpec::EvalBasedUcb { delta: None },
            "lin_ucb" => PolicySpec::LinUcb { regularization: 1.0, theta_bound: 1.0, delta: None, radius: None },
            "exp4p" => PolicySpec::Exp4p { p_min: None, delta: None },
            "rand" => PolicySpec::Rand,
            other => {
                return Err(Error::Config(vec![format!(
                    "unknown policy '{other}', expected one of {}",
                    Self::NAMES.join(", ")
                )]))
            }
        })
    }

    pub fn default_label(&self) -> &'static str {
        match self {
            PolicySpec::Oracle => "oracle",
            PolicySpec::Average => "average",
            PolicySpec::EpsGreedy { samples: SampleMode::ExplorationOnly, .. } => "eps_greedy",
            PolicySpec::EpsGreedy { samples: SampleMode::All, .. } => "eps_greedy_all",
            PolicySpec::Greedy { .. } => "greedy",
            PolicySpec::Esag => "esag",
            PolicySpec::EvalBasedUcb { .. } => "eval_based_ucb",
            PolicySpec::LinUcb { .. } => "lin_ucb",
            PolicySpec::Exp4p { .. } => "exp4p",
            PolicySpec::Rand => "rand",
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            PolicySpec::EpsGreedy { epsilon, lambda, .. } => {
                if !(epsilon.scale >= 0.0 && epsilon.scale.is_finite() && epsilon.exponent.is_finite()) {
                    errs.push("eps_greedy: epsilon scale must be nonnegative and finite".into());
                }
                if lambda.is_some_and(|l| l.is_nan() || l < 0.0) {
                    errs.push("eps_greedy: lambda must be nonnegative".into());
                }
            }
            PolicySpec::Greedy { lambda, .. } if lambda.is_some_and(|l| l.is_nan() || l < 0.0) => {
                errs.push("greedy: lambda must be nonnegative".into());
            }
            PolicySpec::LinUcb { regularization, .. } if regularization.is_nan() || *regularization <= 0.0 => {
                errs.push("lin_ucb: regularization must be positive".into());
            }
            PolicySpec::EvalBasedUcb { delta: Some(d) } | PolicySpec::Exp4p { delta: Some(d), .. }
                if !(*d > 0.0 && *d < 1.0) =>
            {
                errs.push(format!("{}: delta must lie in (0, 1)", self.default_label()));
            }
            _ => {}
        }
        errs
    }

    pub fn build(&self, label: &str, ctx: &PolicyContext) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicySpec::Oracle => {
                let w = ctx
                    .oracle_weights
                    .clone()
                    .ok_or_else(|| Error::InvalidArgument("oracle policy needs known calibration".into()))?;
                Box::new(OraclePolicy::new(ctx.link, w))
            }
            PolicySpec::Average => Box::new(AverageScore),
            PolicySpec::EpsGreedy { samples, epsilon, lambda, resolve_every } => {
                Box::new(EpsilonGreedy::new(label, ctx, *epsilon, *samples, *lambda, *resolve_every))
            }
            PolicySpec::Greedy { lambda, resolve_every } => Box::new(EpsilonGreedy::new(
                label,
                ctx,
                EpsilonSchedule::constant(0.0),
                SampleMode::All,
                *lambda,
                *resolve_every,
            )),
            PolicySpec::Esag => Box::new(Esag::new(label, ctx)),
            PolicySpec::EvalBasedUcb { delta } => Box::new(EvalBasedUcb::new(label, ctx, *delta)),
            PolicySpec::LinUcb { regularization, theta_bound, delta, radius } => {
                Box::new(LinUcb::new(label, ctx, *regularization, *theta_bound, *delta, *radius))
            }
            PolicySpec::Exp4p { p_min, delta } => Box::new(Exp4P::new(label, ctx, *p_min, *delta)),
            PolicySpec::Rand => Box::new(RandomEvaluator::new(ctx)),
        })
    }
}

/// A policy entry in an experiment: its spec plus an optional display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(flatten)]
    pub spec: PolicySpec,
    #[serde(default)]
    pub label: Option<String>,
}

impl PolicyConfig {
    pub fn new(spec: PolicySpec) -> Self {
        Self { spec, label: None }
    }

    pub fn labeled(spec: PolicySpec, label: impl Into<String>) -> Self {
        Self { spec, label: Some(label.into()) }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or_else(|| self.spec.default_label())
    }
}

/// Builds the context shared by all policies of a run.
pub fn policy_context(
    link: Link,
    sigma: &[f64],
    horizon: usize,
    delta: f64,
    support: f64,
    oracle_weights: Option<Vec<f64>>,
) -> PolicyContext {
    PolicyContext { link, sigma: floor_sigma(sigma), horizon, delta, support, oracle_weights }
}
