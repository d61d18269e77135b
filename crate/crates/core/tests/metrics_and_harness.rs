use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evalbandit::harness::{
    export_replay_csv, parse_replay, record_environment, run_experiment, run_replay, ExperimentConfig, ReplayConfig,
    Series,
};
use evalbandit::metrics::{
    absolute_regret_increment, aggregate_ci, cumulative, growth_exponent, relative_regret_increment,
};
use evalbandit::oracle::{compute_oracle_weights, scores, top_k};
use evalbandit::policies::PolicyConfig;
use evalbandit::{Error, Link, Matrix, PolicySpec, Setting};

#[test]
fn relative_regret_matches_brute_force_subset_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (arms, j) = (rng.random_range(3..9), rng.random_range(1..4));
        let k = rng.random_range(1..arms);
        let rows: Vec<Vec<f64>> = (0..arms).map(|_| (0..j).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let phi = Matrix::from_rows(&rows).unwrap();
        let w: Vec<f64> = (0..j).map(|_| rng.random_range(0.1..1.0)).collect();
        let est = scores(&w, &phi);
        let best = (0u32..1 << arms)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..arms).filter(|i| m >> i & 1 == 1).map(|i| est[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        let selected: Vec<usize> = (0..k).collect();
        let picked: f64 = selected.iter().map(|&i| est[i]).sum();
        let inc = relative_regret_increment(&w, &phi, Link::Identity, &selected, k).unwrap();
        assert!((inc - (best - picked)).abs() < 1e-12);
    }
}

#[test]
fn noiseless_absolute_regret_equals_the_true_gap() {
    let alpha = [1.0, 3.0];
    let w = compute_oracle_weights(&alpha, &[1.0, 1.0], Setting::Linear).unwrap().w;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let rewards: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..10.0)).collect();
        let rows: Vec<Vec<f64>> = rewards.iter().map(|r| alpha.iter().map(|a| a * r).collect()).collect();
        let oracle = top_k(&scores(&w, &Matrix::from_rows(&rows).unwrap()), 2).unwrap();
        let selected = vec![0, 5];
        let gap = evalbandit::oracle::suboptimality_gap(&rewards, &selected, 2);
        assert!((absolute_regret_increment(&rewards, &selected, &oracle) - gap).abs() < 1e-12);
    }
}

#[test]
fn confidence_band_covers_the_true_mean_at_the_stated_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (trials, runs) = (2000, 40);
    let mut hits = 0;
    for _ in 0..trials {
        let series: Vec<Vec<f64>> = (0..runs).map(|_| vec![rng.random_range(0.0..2.0)]).collect();
        let band = aggregate_ci(&series, 0.95).unwrap();
        hits += usize::from((band.mean[0] - 1.0).abs() <= band.half_width[0]);
    }
    let rate = hits as f64 / trials as f64;
    // Binomial sd at 2000 trials is about 0.005.
    assert!((rate - 0.95).abs() < 0.02, "coverage {rate}");
    assert!(aggregate_ci(&[vec![1.0]], 0.95).is_err());
}

#[test]
fn growth_exponent_recovers_power_laws() {
    for p in [0.5, 2.0 / 3.0, 1.0] {
        let inc: Vec<f64> = (1..=4000).map(|t| (t as f64).powf(p) - ((t - 1) as f64).powf(p)).collect();
        let g = growth_exponent(&cumulative(&inc)).unwrap();
        assert!((g - p).abs() < 1e-6, "{g} vs {p}");
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str("horizon = 200\nruns = 3\nj = 3\nk = 2\nk_max = 6\nseed = 9\n").unwrap();
    cfg.policies = ["oracle", "eps_greedy", "esag", "lin_ucb", "exp4p", "eval_based_ucb", "greedy"]
        .iter()
        .map(|n| PolicyConfig::new(PolicySpec::from_name(n).unwrap()))
        .collect();
    cfg
}

#[test]
fn experiments_are_deterministic_and_paired() {
    let cfg = small_config();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert!(a.pairing_holds());
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!(x.rel_regret, y.rel_regret);
        assert_eq!(x.phi_digest, y.phi_digest);
    }
    // The oracle never pays relative regret.
    assert!(a.mean_series("oracle", Series::RelRegretCum).iter().all(|&v| v == 0.0));
    let mut other = cfg.clone();
    other.seed = 10;
    assert_ne!(run_experiment(&other).unwrap().traces[0].phi_digest, a.traces[0].phi_digest);
}

#[test]
fn replaying_a_recorded_environment_reproduces_the_live_run() {
    let mut cfg = small_config();
    cfg.runs = 1;
    cfg.keep_selections = true;
    cfg.setting = Setting::Linear;
    let live = run_experiment(&cfg).unwrap();

    let mut csv = Vec::new();
    export_replay_csv(&record_environment(&cfg, 0).unwrap(), &mut csv).unwrap();
    let data = parse_replay(csv.as_slice()).unwrap();
    let params = &live.runs[0];
    let replay_cfg = ReplayConfig {
        k: cfg.k,
        setting: cfg.setting,
        link: None,
        alpha: params.alpha.clone(),
        sigma: Some(params.sigma.clone()),
        delta: cfg.delta,
        support: Some(cfg.reward_distribution().unwrap().support()),
        policies: cfg.policies.clone(),
        runs: 1,
        seed: cfg.seed,
        level: cfg.level,
    };
    let replayed = run_replay(&data, &replay_cfg).unwrap();
    for policy in &live.policies {
        let a = live.traces_for(policy).next().unwrap();
        let b = replayed.traces_for(policy).next().unwrap();
        assert_eq!(a.selected, b.selected, "{policy}");
        assert_eq!(a.rel_regret, b.rel_regret, "{policy}");
        assert_eq!(a.gap, b.gap, "{policy}");
        assert_eq!(a.phi_digest, b.phi_digest, "{policy}");
    }
}

#[test]
fn replay_parser_reports_locations() {
    let bad_number = "round,arm,reward,eval_1\n1,0,0.5,0.1\n1,1,x,0.2\n";
    assert!(matches!(parse_replay(bad_number.as_bytes()), Err(Error::Parse { line: 3, .. })));
    let ragged = "round,arm,reward,eval_1,eval_2\n1,0,0.5,0.1\n";
    assert!(matches!(parse_replay(ragged.as_bytes()), Err(Error::Parse { line: 2, .. })));
    let bad_header = "round,arm,score,eval_1\n";
    assert!(matches!(parse_replay(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    let duplicate = "round,arm,reward,eval_1\n1,0,0.5,0.1\n1,0,0.7,0.3\n";
    assert!(matches!(parse_replay(duplicate.as_bytes()), Err(Error::Schema(_))));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_evalbandit")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_separate_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    std::fs::write(&good, "round,arm,reward,eval_1\n1,0,0.5,0.5\n1,1,0.9,0.8\n2,0,0.1,0.2\n2,1,0.4,0.3\n").unwrap();
    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "round,arm,reward,eval_1\n1,0,oops,0.5\n").unwrap();
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "horizon = 0\nruns = 0\n").unwrap();

    let ok = cli(&["replay", "--data", good.to_str().unwrap(), "--policies", "esag,greedy"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("policy,run,t,"));

    assert_eq!(cli(&["replay", "--data", broken.to_str().unwrap(), "--policies", "esag"]).status.code(), Some(3));
    let missing = dir.path().join("missing.csv");
    assert_eq!(cli(&["replay", "--data", missing.to_str().unwrap(), "--policies", "esag"]).status.code(), Some(3));
    let cfg_err = cli(&["synth", "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(cfg_err.status.code(), Some(2));
    // Every invalid field is reported, not just the first.
    let msg = String::from_utf8_lossy(&cfg_err.stderr);
    assert!(msg.contains("horizon") && msg.contains("runs"), "{msg}");
    assert_eq!(cli(&["replay", "--data", good.to_str().unwrap(), "--policies", "nope"]).status.code(), Some(2));
}

#[test]
fn cli_writes_all_experiment_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&["synth", "--preset", "fig1b", "--runs", "2", "--horizon", "50", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    assert_eq!(traces.lines().next().unwrap(), "policy,run,t,rel_regret_cum,abs_regret_cum,est_error,gap");
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["paired_environments"], serde_json::Value::Bool(true));
    assert!(out.join("summary.csv").exists());
}
