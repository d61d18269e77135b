//! Seeded multi-run execution and the oracle-gap sweep.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Mode};
use super::streams::{stream, StreamRole};
use crate::error::{Error, Result};
use crate::metrics::{
    absolute_regret_increment, aggregate_ci, estimation_error, relative_regret_from_estimates, ConfidenceBand,
    RoundRecord, RunTrace,
};
use crate::model::{EvaluatorModel, Environment, Link, NoiseKind, RewardKind, RoundObservation};
use crate::oracle::{compute_oracle_weights, estimate_rewards, ranking_margin, suboptimality_gap, top_k, Setting};
use crate::policies::{policy_context, EstimateTarget, Policy};

/// Calibration drawn for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunParameters {
    pub run: usize,
    pub alpha: Option<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub oracle_weights: Option<Vec<f64>>,
}

/// Traces of every (policy, run) pair, ordered by policy then run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_echo: serde_json::Value,
    pub seed: u64,
    pub level: f64,
    pub policies: Vec<String>,
    pub runs: Vec<RunParameters>,
    pub traces: Vec<RunTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    RelRegretCum,
    AbsRegretCum,
    EstError,
    Gap,
}

impl ExperimentResult {
    pub fn traces_for<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a RunTrace> + 'a {
        self.traces.iter().filter(move |t| t.policy == policy)
    }

    pub fn series(&self, policy: &str, which: Series) -> Vec<Vec<f64>> {
        self.traces_for(policy)
            .map(|t| match which {
                Series::RelRegretCum => t.rel_regret_cum(),
                Series::AbsRegretCum => t.abs_regret_cum(),
                Series::EstError => t.est_error.clone(),
                Series::Gap => t.gap.clone(),
            })
            .collect()
    }

    /// Pointwise mean over runs.
    pub fn mean_series(&self, policy: &str, which: Series) -> Vec<f64> {
        let all = self.series(policy, which);
        let n = all.len().max(1) as f64;
        let len = all.first().map_or(0, Vec::len);
        (0..len).map(|t| all.iter().map(|s| s[t]).sum::<f64>() / n).collect()
    }

    pub fn band(&self, policy: &str, which: Series) -> Result<ConfidenceBand> {
        aggregate_ci(&self.series(policy, which), self.level)
    }

    /// Whether all policies of each run were shown identical evaluations.
    pub fn pairing_holds(&self) -> bool {
        self.runs.iter().all(|p| {
            let mut digests = self.traces.iter().filter(|t| t.run == p.run).map(|t| &t.phi_digest);
            match digests.next() {
                Some(first) => digests.all(|d| d == first),
                None => true,
            }
        })
    }
}

/// What a trace is scored against. Without weights only the true gap is
/// available.
#[derive(Debug, Clone)]
pub struct Scoring {
    pub link: Link,
    pub weights: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub reward_mean: f64,
}

fn check_selection(selected: &[usize], k: usize, arms: usize, policy: &str) -> Result<()> {
    let mut sorted = selected.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != k || selected.len() != k || sorted.last().is_some_and(|&i| i >= arms) {
        return Err(Error::InvalidArgument(format!(
            "policy {policy} returned {selected:?}, expected {k} distinct arms below {arms}"
        )));
    }
    Ok(())
}

/// Plays `policy` for `horizon` rounds drawn from `next_round` and records
/// every metric.
#[allow(clippy::too_many_arguments)]
pub fn drive(
    policy: &mut dyn Policy,
    run: usize,
    k: usize,
    horizon: usize,
    scoring: &Scoring,
    rng: &mut ChaCha8Rng,
    keep_selections: bool,
    mut next_round: impl FnMut(usize) -> Result<RoundObservation>,
) -> Result<RunTrace> {
    let mut trace = RunTrace::new(policy.name(), run);
    let mut hasher = Sha256::new();
    let mut bytes = Vec::new();
    let alpha_ref = scoring.alpha.as_ref().map(|alpha| match policy.estimate_target() {
        EstimateTarget::Alpha => alpha.clone(),
        EstimateTarget::MeanScaledAlpha => alpha.iter().map(|a| a * scoring.reward_mean).collect(),
    });
    for t in 1..=horizon {
        let obs = next_round(t)?;
        let phi = &obs.evaluations;
        if phi.rows() <= k {
            return Err(Error::Schema(format!("round {} has {} arms, need more than k = {k}", obs.round, phi.rows())));
        }
        bytes.clear();
        for v in phi.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        hasher.update(&bytes);

        let selected = policy.select(phi, k, rng)?;
        check_selection(&selected, k, phi.rows(), policy.name())?;
        let observed: Vec<f64> = selected.iter().map(|&i| obs.rewards[i]).collect();
        policy.update(phi, &selected, &observed)?;

        let (rel_regret, abs_regret, oracle_margin, oracle_selected) = match &scoring.weights {
            Some(w) => {
                let r_hat = estimate_rewards(w, phi, scoring.link)?;
                let best = top_k(&r_hat, k)?;
                (
                    relative_regret_from_estimates(&r_hat, &best, &selected),
                    absolute_regret_increment(&obs.rewards, &selected, &best),
                    ranking_margin(&r_hat, k).unwrap_or(f64::NAN),
                    best,
                )
            }
            None => (f64::NAN, f64::NAN, f64::NAN, Vec::new()),
        };
        let est_error = match (policy.alpha_estimate(), &alpha_ref) {
            (Some(a), Some(r)) => estimation_error(&a, r),
            _ => f64::NAN,
        };
        trace.push(RoundRecord {
            rel_regret,
            abs_regret,
            est_error,
            gap: suboptimality_gap(&obs.rewards, &selected, k),
            oracle_margin,
            selected: if keep_selections { selected } else { Vec::new() },
            oracle_selected: if keep_selections { oracle_selected } else { Vec::new() },
        });
    }
    trace.phi_digest = hex::encode(hasher.finalize());
    Ok(trace)
}

/// Slopes and noise levels for `run`: explicit vectors when configured,
/// otherwise uniform on `[x0 / 2, 3 x0 / 2]`. Both vectors are always drawn
/// so fixing one leaves the other unchanged.
pub fn draw_parameters(cfg: &ExperimentConfig, run: usize) -> (Vec<f64>, Vec<f64>) {
    draw_calibration(cfg.seed, run as u64, StreamRole::Parameters, 0, cfg.j, cfg.alpha0, cfg.sigma0, &cfg.alpha, &cfg.sigma)
}

#[allow(clippy::too_many_arguments)]
fn draw_calibration(
    seed: u64,
    run: u64,
    role: StreamRole,
    index: u64,
    j: usize,
    alpha0: f64,
    sigma0: f64,
    alpha: &Option<Vec<f64>>,
    sigma: &Option<Vec<f64>>,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, run, role, index);
    let drawn_alpha: Vec<f64> = (0..j).map(|_| alpha0 * (0.5 + rng.random::<f64>())).collect();
    let drawn_sigma: Vec<f64> = (0..j).map(|_| sigma0 * (0.5 + rng.random::<f64>())).collect();
    (alpha.clone().unwrap_or(drawn_alpha), sigma.clone().unwrap_or(drawn_sigma))
}

/// The environment a run of `cfg` samples from.
pub fn environment(cfg: &ExperimentConfig, alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Environment> {
    Ok(Environment {
        rewards: cfg.reward_distribution()?,
        model: EvaluatorModel::new(alpha, sigma, cfg.link(), cfg.noise())?,
        arms: cfg.arm_schedule(),
    })
}

/// The exact rounds every policy of `run` is shown.
pub fn record_environment(cfg: &ExperimentConfig, run: usize) -> Result<Vec<RoundObservation>> {
    let (alpha, sigma) = draw_parameters(cfg, run);
    let env = environment(cfg, alpha, sigma)?;
    let mut rng = stream(cfg.seed, run as u64, StreamRole::Environment, 0);
    Ok((1..=cfg.horizon).map(|t| env.sample_round(t, &mut rng)).collect())
}

/// Runs every configured policy on `cfg.runs` paired environments.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.mode != Mode::Regret {
        return Err(Error::Config(vec!["run_experiment needs mode = \"regret\"".into()]));
    }
    let dist = cfg.reward_distribution()?;
    let mut params = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let (alpha, sigma) = draw_parameters(cfg, run);
        let w = compute_oracle_weights(&alpha, &sigma, cfg.setting)?.w;
        params.push(RunParameters { run, alpha: Some(alpha), sigma, oracle_weights: Some(w) });
    }

    let jobs: Vec<(usize, usize)> =
        (0..cfg.policies.len()).flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let traces = jobs
        .par_iter()
        .map(|&(p, run)| -> Result<RunTrace> {
            let par = &params[run];
            let alpha = par.alpha.clone().expect("synthetic runs carry alpha");
            let w = par.oracle_weights.clone();
            let env = environment(cfg, alpha.clone(), par.sigma.clone())?;
            let ctx = policy_context(cfg.link(), &par.sigma, cfg.horizon, cfg.delta, dist.support(), w.clone());
            let spec = &cfg.policies[p];
            let mut policy = spec.spec.build(spec.label(), &ctx)?;
            let scoring = Scoring { link: cfg.link(), weights: w, alpha: Some(alpha), reward_mean: dist.mean() };
            let mut env_rng = stream(cfg.seed, run as u64, StreamRole::Environment, 0);
            let mut policy_rng = stream(cfg.seed, run as u64, StreamRole::Policy, p as u64);
            drive(policy.as_mut(), run, cfg.k, cfg.horizon, &scoring, &mut policy_rng, cfg.keep_selections, |t| {
                Ok(env.sample_round(t, &mut env_rng))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentResult {
        config_echo: serde_json::to_value(cfg).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        seed: cfg.seed,
        level: cfg.level,
        policies: cfg.policies.iter().map(|p| p.label().to_string()).collect(),
        runs: params,
        traces,
    })
}

/// Parameters of an oracle-gap sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSweep {
    pub j_values: Vec<usize>,
    pub settings: Vec<Setting>,
    pub alpha0: f64,
    pub sigma0: f64,
    pub rounds: usize,
    pub runs: usize,
    pub k: usize,
    pub k_max: usize,
    pub reward: RewardKind,
    pub seed: u64,
    pub level: f64,
}

impl GapSweep {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            j_values: cfg.j_list.clone(),
            settings: cfg.settings.clone(),
            alpha0: cfg.alpha0,
            sigma0: cfg.sigma0,
            rounds: cfg.horizon,
            runs: cfg.runs,
            k: cfg.k,
            k_max: cfg.k_max,
            reward: cfg.reward,
            seed: cfg.seed,
            level: cfg.level,
        }
    }
}

/// Mean per-round suboptimality gap of the oracle and of plain averaging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub setting: Setting,
    pub j: usize,
    pub oracle_mean: f64,
    pub oracle_half_width: f64,
    pub average_mean: f64,
    pub average_half_width: f64,
}

fn setting_model(setting: Setting) -> (Link, NoiseKind) {
    match setting {
        Setting::Glm => (Link::Logistic, NoiseKind::TruncatedGaussian),
        Setting::Linear => (Link::Identity, NoiseKind::Gaussian),
    }
}

pub fn sweep_oracle_gap(sweep: &GapSweep) -> Result<Vec<GapRow>> {
    let cfg = ExperimentConfig {
        mode: Mode::OracleGap,
        horizon: sweep.rounds,
        k: sweep.k,
        k_max: sweep.k_max,
        alpha0: sweep.alpha0,
        sigma0: sweep.sigma0,
        reward: sweep.reward,
        runs: sweep.runs,
        seed: sweep.seed,
        level: sweep.level,
        j_list: sweep.j_values.clone(),
        settings: sweep.settings.clone(),
        ..Default::default()
    };
    cfg.validate()?;
    let dist = cfg.reward_distribution()?;
    let mut rows = Vec::new();
    for (si, &setting) in sweep.settings.iter().enumerate() {
        let (link, noise) = setting_model(setting);
        for &j in &sweep.j_values {
            let index = ((si as u64) << 32) | j as u64;
            let per_run = (0..sweep.runs)
                .into_par_iter()
                .map(|run| -> Result<(f64, f64)> {
                    let (alpha, sigma) =
                        draw_calibration(sweep.seed, run as u64, StreamRole::Sweep, 2 * index, j, sweep.alpha0, sweep.sigma0, &None, &None);
                    let w = compute_oracle_weights(&alpha, &sigma, setting)?.w;
                    let env = Environment {
                        rewards: dist,
                        model: EvaluatorModel::new(alpha, sigma, link, noise)?,
                        arms: cfg.arm_schedule(),
                    };
                    let mut rng = stream(sweep.seed, run as u64, StreamRole::Sweep, 2 * index + 1);
                    let (mut oracle_gap, mut average_gap) = (0.0, 0.0);
                    for t in 1..=sweep.rounds {
                        let obs = env.sample_round(t, &mut rng);
                        let oracle_sel = top_k(&estimate_rewards(&w, &obs.evaluations, link)?, sweep.k)?;
                        let means: Vec<f64> =
                            obs.evaluations.iter_rows().map(|r| r.iter().sum::<f64>() / j as f64).collect();
                        let average_sel = top_k(&means, sweep.k)?;
                        oracle_gap += suboptimality_gap(&obs.rewards, &oracle_sel, sweep.k);
                        average_gap += suboptimality_gap(&obs.rewards, &average_sel, sweep.k);
                    }
                    Ok((oracle_gap / sweep.rounds as f64, average_gap / sweep.rounds as f64))
                })
                .collect::<Result<Vec<_>>>()?;
            let band = |v: Vec<f64>| -> (f64, f64) {
                match aggregate_ci(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>(), sweep.level) {
                    Ok(b) => (b.mean[0], b.half_width[0]),
                    Err(_) => (v.iter().sum::<f64>() / v.len() as f64, f64::NAN),
                }
            };
            let (oracle_mean, oracle_half_width) = band(per_run.iter().map(|p| p.0).collect());
            let (average_mean, average_half_width) = band(per_run.iter().map(|p| p.1).collect());
            rows.push(GapRow { setting, j, oracle_mean, oracle_half_width, average_mean, average_half_width });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{PolicyConfig, PolicySpec};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 40,
            runs: 2,
            j: 3,
            k_max: 6,
            policies: vec![PolicyConfig::new(PolicySpec::Oracle), PolicyConfig::new(PolicySpec::Esag)],
            ..Default::default()
        }
    }

    #[test]
    fn oracle_trace_has_zero_relative_regret() {
        let res = run_experiment(&small()).unwrap();
        for t in res.traces_for("oracle") {
            assert!(t.rel_regret.iter().all(|&x| x == 0.0));
            assert!(t.abs_regret.iter().all(|&x| x == 0.0));
        }
        assert!(res.pairing_holds());
        assert_eq!(res.traces.len(), 4);
    }

    #[test]
    fn explicit_alpha_keeps_drawn_sigma() {
        let cfg = small();
        let (_, s1) = draw_parameters(&cfg, 0);
        let fixed = ExperimentConfig { alpha: Some(vec![1.0, 2.0, 3.0]), ..cfg };
        let (a2, s2) = draw_parameters(&fixed, 0);
        assert_eq!(a2, vec![1.0, 2.0, 3.0]);
        assert_eq!(s1, s2);
    }

    #[test]
    fn noiseless_gap_sweep_is_zero() {
        let sweep = GapSweep {
            j_values: vec![1, 3],
            settings: vec![Setting::Linear],
            alpha0: 1.0,
            sigma0: 0.0,
            rounds: 20,
            runs: 2,
            k: 2,
            k_max: 8,
            reward: RewardKind::Uniform { lo: 0.0, hi: 1.0 },
            seed: 5,
            level: 0.95,
        };
        for row in sweep_oracle_gap(&sweep).unwrap() {
            assert_eq!(row.oracle_mean, 0.0);
            assert_eq!(row.average_mean, 0.0);
        }
    }
}
