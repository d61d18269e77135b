//! Estimation kernels shared by the policies.
//!
//! - per-evaluator regularized maximum likelihood for the GLM slope,
//! - a compensated streaming column mean,
//! - the Lagrange-multiplier solve and diagonal shrinkage behind the
//!   optimistic evaluation-based UCB weights.

use crate::error::{Error, Result};
use crate::model::{Link, Matrix};
use crate::oracle::norm2;

/// Pairs `(r, phi_j)` collected for one evaluator, plus the ridge term.
#[derive(Debug, Clone, Default)]
pub struct MleDataset {
    rewards: Vec<f64>,
    evals: Vec<f64>,
    lambda: f64,
    // Sufficient statistics for the identity link.
    sum_r_phi: f64,
    sum_r2: f64,
}

impl MleDataset {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "regularizer must be nonnegative");
        Self { lambda, ..Self::default() }
    }

    pub fn push(&mut self, reward: f64, eval: f64) {
        self.rewards.push(reward);
        self.evals.push(eval);
        self.sum_r_phi += reward * eval;
        self.sum_r2 += reward * reward;
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rewards.iter().copied().zip(self.evals.iter().copied())
    }

    /// Score `F(a) = sum r (g(a r) - phi) + lambda a`.
    pub fn score(&self, a: f64, link: Link) -> f64 {
        let mut acc = self.lambda * a;
        for (r, phi) in self.pairs() {
            acc += r * (link.eval(a * r) - phi);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub estimate: f64,
    /// False when the score never changed sign on the search bracket; the
    /// estimate is then the last bracket midpoint.
    pub converged: bool,
}

const MAX_BRACKET: f64 = (1u64 << 60) as f64;
const BISECTION_STEPS: usize = 200;

/// Root of the regularized likelihood score for one evaluator.
pub fn mle_glm_1d(data: &MleDataset, link: Link) -> Result<MleFit> {
    if data.is_empty() && data.lambda == 0.0 {
        return Err(Error::InvalidArgument("empty dataset needs a positive regularizer".into()));
    }
    if link == Link::Identity {
        // The score is affine in `a`; its root is the ridge normal equation.
        let denom = data.sum_r2 + data.lambda;
        return Ok(if denom > 0.0 {
            MleFit { estimate: data.sum_r_phi / denom, converged: true }
        } else {
            MleFit { estimate: 0.0, converged: false }
        });
    }

    if data.sum_r2 + data.lambda == 0.0 {
        // Score is identically zero: every slope fits.
        return Ok(MleFit { estimate: 0.0, converged: false });
    }
    let min_r = data.rewards.iter().copied().filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
    let r_proxy = if min_r.is_finite() { min_r } else { 1.0 };
    let max_feature = data
        .evals
        .iter()
        .map(|&phi| link.inverse(phi).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut bound = 10.0 * (1.0 + max_feature / r_proxy);

    loop {
        if data.score(-bound, link) <= 0.0 && data.score(bound, link) >= 0.0 {
            break;
        }
        if bound >= MAX_BRACKET {
            return Ok(MleFit { estimate: 0.0, converged: false });
        }
        bound = (bound * 2.0).min(MAX_BRACKET);
    }

    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = data.score(mid, link);
        if f == 0.0 {
            return Ok(MleFit { estimate: mid, converged: true });
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MleFit { estimate: 0.5 * (lo + hi), converged: true })
}

/// Column-wise running mean over every row ever seen, with Kahan-compensated
/// sums.
#[derive(Debug, Clone)]
pub struct StreamingMean {
    sum: Vec<f64>,
    comp: Vec<f64>,
    count: usize,
}

impl StreamingMean {
    pub fn new(dim: usize) -> Self {
        Self { sum: vec![0.0; dim], comp: vec![0.0; dim], count: 0 }
    }

    pub fn update(&mut self, rows: &Matrix) {
        debug_assert_eq!(rows.cols(), self.sum.len());
        for row in rows.iter_rows() {
            for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(row) {
                let y = x - *c;
                let t = *s + y;
                *c = (t - *s) - y;
                *s = t;
            }
        }
        self.count += rows.rows();
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some(self.sum.iter().map(|s| s / n).collect())
    }
}

/// Running sums for the ratio estimate `sum g^-1(phi) / sum r` over
/// selected arms.
#[derive(Debug, Clone)]
pub struct UcbEstimatorState {
    numerator: Vec<f64>,
    denominator: f64,
    rounds: usize,
}

impl UcbEstimatorState {
    pub fn new(dim: usize) -> Self {
        Self { numerator: vec![0.0; dim], denominator: 0.0, rounds: 0 }
    }

    /// Adds one round: link-inverted features and rewards of the selected arms.
    pub fn update<'a>(&mut self, features: impl IntoIterator<Item = &'a [f64]>, rewards: &[f64]) {
        for row in features {
            for (n, x) in self.numerator.iter_mut().zip(row) {
                *n += x;
            }
        }
        self.denominator += rewards.iter().sum::<f64>();
        self.rounds += 1;
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    pub fn alpha_hat(&self) -> Option<Vec<f64>> {
        (self.denominator > 0.0).then(|| self.numerator.iter().map(|n| n / self.denominator).collect())
    }

    /// Confidence width for the upcoming round `t = rounds + 1`.
    pub fn beta(&self, sigma: &[f64], k: usize, delta: f64) -> f64 {
        let j = sigma.len() as f64;
        let log = (2.0 / delta).ln();
        let var: f64 = sigma.iter().map(|s| s * s).sum();
        let t_minus_1 = self.rounds as f64;
        (2.0 * (2.0 * j * log).sqrt() / 3.0 + (t_minus_1 * k as f64 * var * log).sqrt()) / self.denominator
    }
}

fn kkt_residual(alpha_hat: &[f64], sigma: &[f64], beta2: f64, lambda: f64) -> f64 {
    alpha_hat
        .iter()
        .zip(sigma)
        .filter(|(_, &s)| s > 0.0)
        .map(|(a, s)| (a / (lambda * s * s + beta2)).powi(2))
        .sum()
}

/// Multiplier `lambda > 0` with `sum_j (a_j / (lambda s_j^2 + beta^2))^2 = 1 / beta^2`.
pub fn solve_kkt_lambda(alpha_hat: &[f64], sigma: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("confidence width {beta} must be positive")));
    }
    let beta2 = beta * beta;
    let target = 1.0 / beta2;
    if norm2(alpha_hat) <= beta || kkt_residual(alpha_hat, sigma, beta2, 0.0) <= target {
        return Err(Error::DegenerateEstimate(format!(
            "estimate norm {} does not exceed the confidence width {beta}",
            norm2(alpha_hat)
        )));
    }
    let f = |lambda: f64| kkt_residual(alpha_hat, sigma, beta2, lambda);
    let mut hi = 1.0;
    while f(hi) > target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::DegenerateEstimate("multiplier bracket overflowed".into()));
        }
    }
    let mut lo = 0.0;
    let tol = 1e-12 * target;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() < tol {
            return Ok(mid);
        }
        // f decreases in lambda.
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `a_j * lambda s_j^2 / (lambda s_j^2 + beta^2)`.
pub fn shrink_alpha(alpha_hat: &[f64], sigma: &[f64], beta: f64, lambda: f64) -> Vec<f64> {
    if beta == 0.0 {
        return alpha_hat.to_vec();
    }
    let beta2 = beta * beta;
    alpha_hat
        .iter()
        .zip(sigma)
        .map(|(a, s)| {
            let scaled = lambda * s * s;
            a * scaled / (scaled + beta2)
        })
        .collect()
}
