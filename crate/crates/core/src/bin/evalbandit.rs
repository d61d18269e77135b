use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use evalbandit::harness::{
    load_replay_dataset, print_bounds, run_experiment, run_replay, sweep_oracle_gap, write_experiment, write_gap_csv,
    ExperimentConfig, ExperimentResult, GapSweep, Mode, ReplayConfig, Series, PRESETS,
};
use evalbandit::harness::output::write_traces_csv;
use evalbandit::metrics::growth_exponent;
use evalbandit::policies::{PolicyConfig, PolicySpec};
use evalbandit::{Error, Setting};

#[derive(Parser)]
#[command(name = "evalbandit", version, about = "Bandits driven by noisy, biased evaluator scores")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Glm,
    Linear,
    Both,
}

impl SettingArg {
    fn settings(self) -> Vec<Setting> {
        match self {
            SettingArg::Glm => vec![Setting::Glm],
            SettingArg::Linear => vec![Setting::Linear],
            SettingArg::Both => vec![Setting::Glm, Setting::Linear],
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment from a TOML config and/or a preset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = PRESETS)]
        preset: Option<String>,
        /// Output directory for traces.csv, summary.csv and metadata.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Oracle and average-score suboptimality gap against the number of evaluators.
    OracleGap {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
        j_list: Vec<usize>,
        #[arg(long, value_enum, default_value = "both")]
        setting: SettingArg,
        #[arg(long, default_value_t = 1.0)]
        alpha0: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        #[arg(long, default_value_t = 500)]
        rounds: usize,
        #[arg(long, default_value_t = 40)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run policies over recorded rounds (`round,arm,reward,eval_1,...`).
    Replay {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_enum, default_value = "linear")]
        setting: SettingArg,
        /// Known slopes, comma separated; enables regret against the oracle.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Noise levels, comma separated; default 1 each.
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Reward bound; defaults to the largest observed reward.
        #[arg(long)]
        support: Option<f64>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; traces go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the closed-form diagnostic bounds as JSON.
    Bounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = PRESETS)]
        preset: Option<String>,
    },
}

fn print_summary(res: &ExperimentResult) {
    println!("{:<24} {:>16} {:>12} {:>8}", "policy", "rel_regret", "ci_half", "growth");
    for policy in &res.policies {
        let mean = res.mean_series(policy, Series::RelRegretCum);
        let hw = res.band(policy, Series::RelRegretCum).ok().and_then(|b| b.half_width.last().copied());
        let growth = growth_exponent(&mean).map_or("-".to_string(), |g| format!("{g:.3}"));
        println!(
            "{:<24} {:>16.6} {:>12} {:>8}",
            policy,
            mean.last().copied().unwrap_or(f64::NAN),
            hw.map_or("-".to_string(), |h| format!("{h:.4}")),
            growth
        );
    }
}

fn synth(
    config: Option<PathBuf>,
    preset: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    runs: Option<usize>,
    horizon: Option<usize>,
) -> evalbandit::Result<()> {
    let mut cfg = ExperimentConfig::load(config.as_deref(), preset.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    match cfg.mode {
        Mode::OracleGap => {
            let rows = sweep_oracle_gap(&GapSweep::from_config(&cfg))?;
            match &cfg.out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    write_gap_csv(&rows, std::fs::File::create(dir.join("oracle_gap.csv"))?)?;
                }
                None => write_gap_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Mode::Regret => {
            let res = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.out_dir {
                for path in write_experiment(&res, dir, cfg.record_every)? {
                    log::info!("wrote {}", path.display());
                }
            }
            print_summary(&res);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> evalbandit::Result<()> {
    match cli.command {
        Command::Synth { config, preset, out, seed, runs, horizon } => synth(config, preset, out, seed, runs, horizon),
        Command::OracleGap { j_list, setting, alpha0, sigma0, rounds, runs, k, k_max, seed, out } => {
            let sweep = GapSweep {
                j_values: j_list,
                settings: setting.settings(),
                alpha0,
                sigma0,
                rounds,
                runs,
                k,
                k_max,
                reward: ExperimentConfig::default().reward,
                seed,
                level: 0.95,
            };
            let rows = sweep_oracle_gap(&sweep)?;
            match out {
                Some(path) => write_gap_csv(&rows, std::fs::File::create(path)?),
                None => write_gap_csv(&rows, std::io::stdout().lock()),
            }
        }
        Command::Replay { data, policies, k, setting, alpha, sigma, delta, support, runs, seed, out } => {
            let setting = match setting {
                SettingArg::Glm => Setting::Glm,
                SettingArg::Linear => Setting::Linear,
                SettingArg::Both => return Err(Error::Config(vec!["replay needs a single setting".into()])),
            };
            let policies = policies
                .iter()
                .map(|p| PolicySpec::from_name(p.trim()).map(PolicyConfig::new))
                .collect::<evalbandit::Result<Vec<_>>>()?;
            let dataset = load_replay_dataset(&data)?;
            let cfg = ReplayConfig { k, setting, link: None, alpha, sigma, delta, support, policies, runs, seed, level: 0.95 };
            let res = run_replay(&dataset, &cfg)?;
            match out {
                Some(dir) => {
                    write_experiment(&res, &dir, 1)?;
                    Ok(())
                }
                None => write_traces_csv(&res, std::io::stdout().lock(), 1),
            }
        }
        Command::Bounds { config, preset } => {
            let cfg = ExperimentConfig::load(config.as_deref(), preset.as_deref())?;
            let report = print_bounds(&cfg)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            writeln!(std::io::stdout().lock(), "{text}")?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
