//! CSV and JSON emission. Nothing written depends on wall-clock time.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::run::{ExperimentResult, GapRow, Series};
use crate::error::{Error, Result};
use crate::metrics::{growth_exponent, Z_975};

/// Fixed 17-significant-digit scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn recorded(t: usize, horizon: usize, every: usize) -> bool {
    t.is_multiple_of(every) || t == horizon
}

pub fn write_traces_csv<W: Write>(res: &ExperimentResult, out: W, record_every: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "policy,run,t,rel_regret_cum,abs_regret_cum,est_error,gap")?;
    for trace in &res.traces {
        let rel = trace.rel_regret_cum();
        let abs = trace.abs_regret_cum();
        let horizon = trace.len();
        for i in 0..horizon {
            let t = i + 1;
            if !recorded(t, horizon, record_every) {
                continue;
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                trace.policy,
                trace.run,
                t,
                fmt_num(rel[i]),
                fmt_num(abs[i]),
                fmt_num(trace.est_error[i]),
                fmt_num(trace.gap[i])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean and confidence half-width per policy and round; needs two runs.
pub fn write_summary_csv<W: Write>(res: &ExperimentResult, out: W, record_every: usize) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "policy,t,rel_regret_mean,rel_regret_hw,abs_regret_mean,abs_regret_hw,est_error_mean,est_error_hw")?;
    for policy in &res.policies {
        let rel = res.band(policy, Series::RelRegretCum)?;
        let abs = res.band(policy, Series::AbsRegretCum)?;
        let err = res.band(policy, Series::EstError)?;
        let horizon = rel.mean.len();
        for i in 0..horizon {
            if !recorded(i + 1, horizon, record_every) {
                continue;
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                policy,
                i + 1,
                fmt_num(rel.mean[i]),
                fmt_num(rel.half_width[i]),
                fmt_num(abs.mean[i]),
                fmt_num(abs.half_width[i]),
                fmt_num(err.mean[i]),
                fmt_num(err.half_width[i])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Config echo, seeds, per-run calibration and trace digests.
pub fn metadata_json(res: &ExperimentResult) -> serde_json::Value {
    let mut growth = BTreeMap::new();
    let mut final_regret = BTreeMap::new();
    for policy in &res.policies {
        let mean = res.mean_series(policy, Series::RelRegretCum);
        growth.insert(policy.clone(), growth_exponent(&mean));
        final_regret.insert(policy.clone(), mean.last().copied());
    }
    let digests: Vec<_> = res
        .traces
        .iter()
        .map(|t| json!({ "policy": t.policy, "run": t.run, "phi_digest": t.phi_digest }))
        .collect();
    json!({
        "library": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": res.seed,
        "config": res.config_echo,
        "confidence_interval": {
            "method": "normal approximation",
            "level": res.level,
            "z": if (res.level - 0.95).abs() < 1e-12 { Some(Z_975) } else { None },
        },
        "runs": res.runs,
        "paired_environments": res.pairing_holds(),
        "final_mean_rel_regret": final_regret,
        "rel_regret_growth_exponent": growth,
        "traces": digests,
    })
}

/// Writes `traces.csv`, `metadata.json` and, with two or more runs,
/// `summary.csv` into `dir`. Returns the written paths.
pub fn write_experiment(res: &ExperimentResult, dir: &Path, record_every: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let traces = dir.join("traces.csv");
    write_traces_csv(res, std::fs::File::create(&traces)?, record_every)?;
    written.push(traces);
    if res.runs.len() >= 2 {
        let summary = dir.join("summary.csv");
        write_summary_csv(res, std::fs::File::create(&summary)?, record_every)?;
        written.push(summary);
    }
    let meta = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&metadata_json(res)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(&meta, text + "\n")?;
    written.push(meta);
    Ok(written)
}

pub fn write_gap_csv<W: Write>(rows: &[GapRow], out: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(out);
    writeln!(w, "setting,j,oracle_gap_mean,oracle_gap_hw,average_gap_mean,average_gap_hw")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.setting.name(),
            r.j,
            fmt_num(r.oracle_mean),
            fmt_num(r.oracle_half_width),
            fmt_num(r.average_mean),
            fmt_num(r.average_half_width)
        )?;
    }
    w.flush()?;
    Ok(())
}
