//! Experiment configuration: TOML schema, validation and named presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmSchedule, Link, NoiseKind, RewardDistribution, RewardKind};
use crate::oracle::Setting;
use crate::policies::{EpsilonSchedule, PolicyConfig, PolicySpec, SampleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Learning policies against the oracle.
    Regret,
    /// Oracle and average-score gaps as the number of evaluators varies.
    OracleGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmsMode {
    /// `k_max` arms every round.
    Constant,
    /// Uniform arm count in `(k, k_max]` each round.
    Uniform,
}

pub const PRESETS: [&str; 5] = ["fig1a", "fig1b", "fig1c", "fig1d", "appendix"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub horizon: usize,
    pub k: usize,
    pub k_max: usize,
    pub arms: ArmsMode,
    pub j: usize,
    pub setting: Setting,
    /// Defaults to logistic for the GLM setting and identity for linear.
    pub link: Option<Link>,
    /// Defaults to truncated Gaussian for GLM and Gaussian for linear.
    pub noise: Option<NoiseKind>,
    /// Slopes are drawn from `[alpha0 / 2, 3 alpha0 / 2]` unless `alpha` is set.
    pub alpha0: f64,
    /// Noise levels are drawn from `[sigma0 / 2, 3 sigma0 / 2]` unless `sigma` is set.
    pub sigma0: f64,
    pub alpha: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub reward: RewardKind,
    pub policies: Vec<PolicyConfig>,
    pub runs: usize,
    pub seed: u64,
    pub delta: f64,
    /// Only every n-th round (and the last) is written to the trace CSV.
    pub record_every: usize,
    pub level: f64,
    /// Evaluator counts swept in oracle-gap mode.
    pub j_list: Vec<usize>,
    /// Settings swept in oracle-gap mode.
    pub settings: Vec<Setting>,
    /// Keep per-round selected sets in memory.
    pub keep_selections: bool,
    /// Not echoed into metadata, so outputs do not depend on where they land.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Regret,
            horizon: 1000,
            k: 1,
            k_max: 20,
            arms: ArmsMode::Constant,
            j: 10,
            setting: Setting::Glm,
            link: None,
            noise: None,
            alpha0: 1.0,
            sigma0: 1.0,
            alpha: None,
            sigma: None,
            reward: RewardKind::TruncatedGaussian { mu: 0.0, sd: 1.0, lo: 0.0, hi: 20.0 },
            policies: vec![
                PolicyConfig::new(PolicySpec::Oracle),
                PolicyConfig::new(eps_greedy(EpsilonSchedule::default())),
                PolicyConfig::new(PolicySpec::Esag),
            ],
            runs: 10,
            seed: 0,
            delta: 0.1,
            record_every: 1,
            level: 0.95,
            j_list: vec![1, 2, 4, 8, 16, 32, 64, 128],
            settings: vec![Setting::Glm, Setting::Linear],
            keep_selections: false,
            out_dir: None,
        }
    }
}

fn eps_greedy(epsilon: EpsilonSchedule) -> PolicySpec {
    PolicySpec::EpsGreedy { samples: SampleMode::ExplorationOnly, epsilon, lambda: None, resolve_every: 1 }
}

fn eps_greedy_all(resolve_every: usize) -> PolicySpec {
    PolicySpec::EpsGreedy { samples: SampleMode::All, epsilon: EpsilonSchedule::default(), lambda: None, resolve_every }
}

fn full_roster(resolve_every: usize) -> Vec<PolicyConfig> {
    vec![
        PolicyConfig::new(PolicySpec::Oracle),
        PolicyConfig::new(eps_greedy(EpsilonSchedule::default())),
        PolicyConfig::new(eps_greedy_all(resolve_every)),
        PolicyConfig::new(PolicySpec::EvalBasedUcb { delta: None }),
        PolicyConfig::new(PolicySpec::LinUcb { regularization: 1.0, theta_bound: 1.0, delta: None, radius: None }),
        PolicyConfig::new(PolicySpec::Esag),
        PolicyConfig::new(PolicySpec::Greedy { lambda: None, resolve_every }),
        PolicyConfig::new(PolicySpec::Rand),
        PolicyConfig::new(PolicySpec::Exp4p { p_min: None, delta: None }),
    ]
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        Ok(match name {
            "fig1a" => Self {
                mode: Mode::OracleGap,
                horizon: 500,
                runs: 40,
                policies: Vec::new(),
                ..base
            },
            "fig1b" => Self {
                setting: Setting::Linear,
                sigma0: 10.0,
                horizon: 5000,
                runs: 40,
                record_every: 10,
                policies: vec![
                    PolicyConfig::new(eps_greedy(EpsilonSchedule::default())),
                    PolicyConfig::new(eps_greedy_all(1)),
                ],
                ..base
            },
            "fig1c" => Self {
                sigma0: 10.0,
                horizon: 20_000,
                runs: 40,
                record_every: 20,
                // Logistic likelihoods over every sample are refit in batches.
                policies: full_roster(100),
                ..base
            },
            "fig1d" => Self {
                setting: Setting::Linear,
                sigma0: 10.0,
                horizon: 20_000,
                runs: 40,
                record_every: 20,
                policies: full_roster(1),
                ..base
            },
            "appendix" => Self {
                k: 10,
                k_max: 60,
                horizon: 5000,
                runs: 20,
                record_every: 10,
                policies: vec![
                    PolicyConfig::new(PolicySpec::Oracle),
                    PolicyConfig::labeled(
                        eps_greedy(EpsilonSchedule { scale: 0.1, exponent: -1.0 / 3.0, anytime: false }),
                        "eps_greedy_cube_root",
                    ),
                    PolicyConfig::labeled(
                        eps_greedy(EpsilonSchedule { scale: 0.1, exponent: -0.5, anytime: false }),
                        "eps_greedy_square_root",
                    ),
                    PolicyConfig::new(eps_greedy_all(100)),
                    PolicyConfig::new(PolicySpec::EvalBasedUcb { delta: None }),
                    PolicyConfig::new(PolicySpec::LinUcb {
                        regularization: 1.0,
                        theta_bound: 1.0,
                        delta: None,
                        radius: None,
                    }),
                    PolicyConfig::new(PolicySpec::Esag),
                ],
                ..base
            },
            other => {
                return Err(Error::Config(vec![format!(
                    "unknown preset '{other}', expected one of {}",
                    PRESETS.join(", ")
                )]))
            }
        })
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    /// Applies the keys of a TOML document on top of `self`.
    pub fn overlay_toml(&self, src: &str) -> Result<Self> {
        let to_cfg = |e: toml::de::Error| Error::Config(vec![e.message().to_string()]);
        let overlay: toml::Table = toml::from_str(src).map_err(to_cfg)?;
        let mut base = toml::Table::try_from(self).map_err(|e| Error::Config(vec![e.to_string()]))?;
        for (key, value) in overlay {
            base.insert(key, value);
        }
        toml::Value::Table(base).try_into().map_err(to_cfg)
    }

    /// Reads a config file, starting from the named preset when given.
    pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let base = match preset {
            Some(p) => Self::preset(p)?,
            None => Self::default(),
        };
        match path {
            Some(path) => base.overlay_toml(&std::fs::read_to_string(path)?),
            None => Ok(base),
        }
    }

    pub fn link(&self) -> Link {
        self.link.unwrap_or(match self.setting {
            Setting::Glm => Link::Logistic,
            Setting::Linear => Link::Identity,
        })
    }

    pub fn noise(&self) -> NoiseKind {
        self.noise.unwrap_or(match self.setting {
            Setting::Glm => NoiseKind::TruncatedGaussian,
            Setting::Linear => NoiseKind::Gaussian,
        })
    }

    pub fn arm_schedule(&self) -> ArmSchedule {
        match self.arms {
            ArmsMode::Constant => ArmSchedule::Constant { arms: self.k_max },
            ArmsMode::Uniform => ArmSchedule::Uniform { k: self.k, k_max: self.k_max },
        }
    }

    pub fn reward_distribution(&self) -> Result<RewardDistribution> {
        RewardDistribution::new(self.reward)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.horizon == 0 {
            errs.push("horizon must be at least 1".to_string());
        }
        if !(self.k >= 1 && self.k < self.k_max) {
            errs.push(format!("need 1 <= k < k_max, got k = {}, k_max = {}", self.k, self.k_max));
        }
        if self.runs == 0 {
            errs.push("runs must be at least 1".to_string());
        }
        if self.j == 0 {
            errs.push("j must be at least 1".to_string());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            errs.push(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            errs.push(format!("level = {} must lie in (0, 1)", self.level));
        }
        if self.record_every == 0 {
            errs.push("record_every must be at least 1".to_string());
        }
        if !self.alpha0.is_finite() {
            errs.push("alpha0 must be finite".to_string());
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            errs.push("sigma0 must be nonnegative and finite".to_string());
        }
        for (name, v) in [("alpha", &self.alpha), ("sigma", &self.sigma)] {
            if let Some(v) = v {
                if v.len() != self.j {
                    errs.push(format!("{name} has {} entries but j = {}", v.len(), self.j));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    errs.push(format!("{name} entries must be finite"));
                }
            }
        }
        if self.sigma.as_ref().is_some_and(|s| s.iter().any(|&x| x < 0.0)) {
            errs.push("sigma entries must be nonnegative".to_string());
        }
        if let Err(e) = self.reward_distribution() {
            errs.push(e.to_string());
        }
        match self.mode {
            Mode::Regret => {
                if self.policies.is_empty() {
                    errs.push("at least one policy is required".to_string());
                }
                let mut labels: Vec<&str> = self.policies.iter().map(PolicyConfig::label).collect();
                labels.sort_unstable();
                if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
                    errs.push(format!("duplicate policy label '{}'", w[0]));
                }
                for p in &self.policies {
                    errs.extend(p.spec.validate());
                }
            }
            Mode::OracleGap => {
                if self.j_list.is_empty() || self.j_list.contains(&0) {
                    errs.push("j_list must be nonempty with entries >= 1".to_string());
                }
                if self.settings.is_empty() {
                    errs.push("settings must be nonempty".to_string());
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}
