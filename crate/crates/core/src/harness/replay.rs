//! Replay of recorded rounds from CSV, and export of simulated ones.
//!
//! Layout: header `round,arm,reward,eval_1,...,eval_J`, one row per arm.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::run::{drive, ExperimentResult, RunParameters, Scoring};
use super::streams::{stream, StreamRole};
use crate::error::{Error, Result};
use crate::model::{Link, Matrix, RoundObservation};
use crate::oracle::{compute_oracle_weights, Setting};
use crate::policies::{policy_context, PolicyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayDataset {
    pub rounds: Vec<RoundObservation>,
    pub num_evaluators: usize,
}

impl ReplayDataset {
    pub fn reward_mean(&self) -> f64 {
        let (sum, n) = self
            .rounds
            .iter()
            .flat_map(|r| &r.rewards)
            .fold((0.0, 0usize), |(s, n), &r| (s + r, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn max_reward(&self) -> f64 {
        self.rounds.iter().flat_map(|r| &r.rewards).cloned().fold(0.0, f64::max)
    }
}

pub fn load_replay_dataset(path: &Path) -> Result<ReplayDataset> {
    parse_replay(std::fs::File::open(path)?)
}

fn parse_field<T: std::str::FromStr>(raw: &str, column: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse { line, message: format!("column {column}: '{raw}' is not a number") })
}

pub fn parse_replay<R: Read>(reader: R) -> Result<ReplayDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 4 || names[..3] != ["round", "arm", "reward"] {
        return Err(Error::Parse { line: 1, message: "header must start with round,arm,reward,eval_1".into() });
    }
    for (pos, name) in names[3..].iter().enumerate() {
        let expected = format!("eval_{}", pos + 1);
        if *name != expected {
            return Err(Error::Parse { line: 1, message: format!("expected column {expected}, found '{name}'") });
        }
    }
    let j = names.len() - 3;

    let mut grouped: BTreeMap<u64, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let round: u64 = parse_field(&record[0], "round", line)?;
        let arm: u64 = parse_field(&record[1], "arm", line)?;
        let reward: f64 = parse_field(&record[2], "reward", line)?;
        let evals = (0..j)
            .map(|c| parse_field::<f64>(&record[3 + c], names[3 + c], line))
            .collect::<Result<Vec<_>>>()?;
        if !reward.is_finite() || evals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line, message: "non-finite value".into() });
        }
        if grouped.entry(round).or_default().insert(arm, (reward, evals)).is_some() {
            return Err(Error::Schema(format!("line {line}: duplicate arm {arm} in round {round}")));
        }
    }
    if grouped.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    let rounds = grouped
        .into_iter()
        .map(|(round, arms)| {
            let rewards: Vec<f64> = arms.values().map(|a| a.0).collect();
            let data: Vec<f64> = arms.into_values().flat_map(|a| a.1).collect();
            Ok(RoundObservation { round: round as usize, evaluations: Matrix::from_vec(rewards.len(), j, data)?, rewards })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayDataset { rounds, num_evaluators: j })
}

/// Writes rounds in the replay layout with round-trip exact numbers.
pub fn export_replay_csv<W: Write>(rounds: &[RoundObservation], out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    let j = rounds.first().map_or(0, |r| r.evaluations.cols());
    let evals: Vec<String> = (1..=j).map(|c| format!("eval_{c}")).collect();
    writeln!(w, "round,arm,reward{}{}", if j > 0 { "," } else { "" }, evals.join(","))?;
    for r in rounds {
        for (arm, reward) in r.rewards.iter().enumerate() {
            write!(w, "{},{},{:?}", r.round, arm, reward)?;
            for v in r.evaluations.row(arm) {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// How to score and run policies over a replay dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayConfig {
    pub k: usize,
    pub setting: Setting,
    pub link: Option<Link>,
    /// Known slopes enable relative regret and estimation error.
    pub alpha: Option<Vec<f64>>,
    /// Noise levels; one per evaluator, default 1.
    pub sigma: Option<Vec<f64>>,
    pub delta: f64,
    /// Reward bound; defaults to the largest observed reward.
    pub support: Option<f64>,
    pub policies: Vec<PolicyConfig>,
    pub runs: usize,
    pub seed: u64,
    pub level: f64,
}

impl ReplayConfig {
    pub fn link(&self) -> Link {
        self.link.unwrap_or(match self.setting {
            Setting::Glm => Link::Logistic,
            Setting::Linear => Link::Identity,
        })
    }

    fn validate(&self, data: &ReplayDataset) -> Result<()> {
        let mut errs = Vec::new();
        if self.k == 0 {
            errs.push("k must be at least 1".to_string());
        }
        if self.runs == 0 {
            errs.push("runs must be at least 1".to_string());
        }
        if self.policies.is_empty() {
            errs.push("at least one policy is required".to_string());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            errs.push(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        for p in &self.policies {
            errs.extend(p.spec.validate());
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let j = data.num_evaluators;
        for (name, v) in [("alpha", &self.alpha), ("sigma", &self.sigma)] {
            if let Some(v) = v {
                if v.len() != j {
                    return Err(Error::Schema(format!("{name} has {} entries but the data has {j} evaluators", v.len())));
                }
            }
        }
        if let Some(r) = data.rounds.iter().find(|r| r.num_arms() <= self.k) {
            return Err(Error::Schema(format!("round {} has {} arms, need more than k = {}", r.round, r.num_arms(), self.k)));
        }
        if self.link() == Link::Logistic {
            if let Some(r) = data.rounds.iter().find(|r| r.evaluations.as_slice().iter().any(|&v| !(v > 0.0 && v < 1.0))) {
                return Err(Error::Schema(format!("round {} has evaluations outside (0, 1) for the logistic link", r.round)));
            }
        }
        Ok(())
    }
}

/// Runs policies over the recorded rounds. Rewards come only from the data.
pub fn run_replay(data: &ReplayDataset, cfg: &ReplayConfig) -> Result<ExperimentResult> {
    cfg.validate(data)?;
    let j = data.num_evaluators;
    let sigma = cfg.sigma.clone().unwrap_or_else(|| vec![1.0; j]);
    let weights = match &cfg.alpha {
        Some(alpha) => Some(compute_oracle_weights(alpha, &sigma, cfg.setting)?.w),
        None => None,
    };
    let support = cfg.support.unwrap_or_else(|| data.max_reward()).max(f64::MIN_POSITIVE);
    let horizon = data.rounds.len();
    let ctx = policy_context(cfg.link(), &sigma, horizon, cfg.delta, support, weights.clone());
    let scoring = Scoring { link: cfg.link(), weights: weights.clone(), alpha: cfg.alpha.clone(), reward_mean: data.reward_mean() };

    let jobs: Vec<(usize, usize)> = (0..cfg.policies.len()).flat_map(|p| (0..cfg.runs).map(move |r| (p, r))).collect();
    let traces = jobs
        .par_iter()
        .map(|&(p, run)| {
            let spec = &cfg.policies[p];
            let mut policy = spec.spec.build(spec.label(), &ctx)?;
            let mut rng = stream(cfg.seed, run as u64, StreamRole::Policy, p as u64);
            drive(policy.as_mut(), run, cfg.k, horizon, &scoring, &mut rng, true, |t| Ok(data.rounds[t - 1].clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentResult {
        config_echo: serde_json::to_value(cfg).map_err(|e| Error::InvalidArgument(e.to_string()))?,
        seed: cfg.seed,
        level: cfg.level,
        policies: cfg.policies.iter().map(|p| p.label().to_string()).collect(),
        runs: (0..cfg.runs)
            .map(|run| RunParameters { run, alpha: cfg.alpha.clone(), sigma: sigma.clone(), oracle_weights: weights.clone() })
            .collect(),
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "round,arm,reward,eval_1,eval_2\n\
        1,0,0.5,0.1,0.2\n1,1,1.5,0.3,0.4\n1,2,0.2,0.5,0.6\n\
        2,2,1.0,0.1,0.1\n2,0,0.0,0.2,0.2\n2,1,3.0,0.9,0.8\n";

    #[test]
    fn groups_and_orders_rows() {
        let d = parse_replay(GOOD.as_bytes()).unwrap();
        assert_eq!(d.rounds.len(), 2);
        assert_eq!(d.num_evaluators, 2);
        assert_eq!(d.rounds[1].rewards, vec![0.0, 3.0, 1.0]);
        assert_eq!(d.rounds[1].evaluations.row(2), &[0.1, 0.1]);
    }

    #[test]
    fn ragged_row_names_its_line() {
        let bad = "round,arm,reward,eval_1,eval_2\n1,0,0.5,0.1,0.2\n1,1,1.5,0.3\n";
        match parse_replay(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_cells_and_headers() {
        let cell = "round,arm,reward,eval_1\n1,0,abc,0.1\n";
        assert!(matches!(parse_replay(cell.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let header = "round,arm,reward,eval_2\n1,0,1,0.1\n";
        assert!(matches!(parse_replay(header.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let dup = "round,arm,reward,eval_1\n1,0,1,0.1\n1,0,1,0.2\n";
        assert!(matches!(parse_replay(dup.as_bytes()), Err(Error::Schema(_))));
    }

    #[test]
    fn export_then_parse_is_exact() {
        let d = parse_replay(GOOD.as_bytes()).unwrap();
        let mut buf = Vec::new();
        export_replay_csv(&d.rounds, &mut buf).unwrap();
        assert_eq!(parse_replay(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn alpha_length_mismatch_is_schema_error() {
        let d = parse_replay(GOOD.as_bytes()).unwrap();
        let cfg = ReplayConfig {
            k: 1,
            setting: Setting::Linear,
            link: None,
            alpha: Some(vec![1.0]),
            sigma: None,
            delta: 0.1,
            support: None,
            policies: vec![PolicyConfig::new(crate::policies::PolicySpec::Esag)],
            runs: 1,
            seed: 0,
            level: 0.95,
        };
        assert!(matches!(run_replay(&d, &cfg), Err(Error::Schema(_))));
        let ok = ReplayConfig { alpha: Some(vec![1.0, 1.0]), ..cfg };
        let res = run_replay(&d, &ok).unwrap();
        assert_eq!(res.traces[0].len(), 2);
    }
}
