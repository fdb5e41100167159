use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{ExperimentReport, MetricsRow, RealizationRow};
use crate::error::Result;

const SIG_DIGITS: i32 = 6;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `%.6g`-style formatting: six significant digits, trailing zeros trimmed,
/// exponent form outside `[1e-5, 1e6)`.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (SIG_DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..SIG_DIGITS).contains(&exp) {
        trim(&format!("{:.*}", (SIG_DIGITS - 1 - exp).max(0) as usize, x))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

/// `x` rounded to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        format_sig(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

pub fn write_aggregate_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "realizations",
        "mean_wsr",
        "ci_half_width",
        "relative_wsr_pct",
        "rounds",
        "feasibility_violations",
        "hard_case_flags",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.realizations.to_string(),
            format_sig(r.mean_wsr),
            format_sig(r.ci_half_width),
            opt(r.relative_wsr_pct),
            r.rounds.to_string(),
            r.feasibility_violations.to_string(),
            r.hard_case_flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_realization_csv(path: &Path, rows: &[RealizationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "realization",
        "method",
        "wsr",
        "relative_wsr_pct",
        "rounds",
        "feasibility_violations",
        "hard_case_flags",
    ])?;
    for r in rows {
        w.write_record([
            r.realization.to_string(),
            r.method.clone(),
            format_sig(r.wsr),
            opt(r.relative_wsr_pct),
            r.rounds.to_string(),
            r.feasibility_violations.to_string(),
            r.hard_case_flags.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of `(method, iter, wsr)` with 1-based iterations.
pub fn write_curves_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "iter", "wsr"])?;
    for r in rows {
        for (t, v) in r.curve.iter().enumerate() {
            w.write_record([r.method.clone(), (t + 1).to_string(), format_sig(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn aggregate_json(report: &ExperimentReport) -> Result<Value> {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "realizations": r.realizations,
                "mean_wsr": num(r.mean_wsr),
                "ci_half_width": num(r.ci_half_width),
                "relative_wsr_pct": r.relative_wsr_pct.map_or(Value::Null, num),
                "rounds": r.rounds,
                "feasibility_violations": r.feasibility_violations,
                "hard_case_flags": r.hard_case_flags,
                "curve": r.curve.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let cfg = &report.config;
    Ok(json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "name": cfg.name,
        "seeds": { "scenario": cfg.seed, "initialization": cfg.seed ^ super::INIT_SEED_SALT },
        "metadata": {
            "wsr_unit": "nats",
            "reference": report.reference,
            "relative_wsr": "mean over realizations of 100 * wsr / reference wsr",
            "confidence_interval": format!("normal approximation, {} two-sided", cfg.confidence),
            "feasibility_tolerance": super::FEASIBILITY_TOL,
        },
        "config": serde_json::to_value(cfg)?,
        "rows": rows,
    }))
}

/// Writes `aggregate.csv`, `aggregate.json`, `per_realization.csv` and
/// `curves.csv`, which depend only on the configuration and seeds, plus
/// `timing.json` with wall-clock times.
pub fn emit(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_aggregate_csv(&dir.join("aggregate.csv"), &report.rows)?;
    write_per_realization_csv(&dir.join("per_realization.csv"), &report.per_realization)?;
    write_curves_csv(&dir.join("curves.csv"), &report.rows)?;
    let agg = aggregate_json(report)?;
    fs::write(dir.join("aggregate.json"), serde_json::to_string_pretty(&agg)? + "\n")?;
    let timing: serde_json::Map<String, Value> = report
        .rows
        .iter()
        .map(|r| (r.method.clone(), json!(r.wall_time_s)))
        .collect();
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    Ok(())
}
