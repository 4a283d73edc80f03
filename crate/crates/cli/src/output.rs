//! CSV and manifest emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::run::{ReplicateResult, Setting, TargetInstance, TraceRow};

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 11] = [
    "iteration",
    "objective",
    "renyi_bound",
    "step_kl",
    "ess",
    "prox_active",
    "repairs",
    "mse_mean",
    "mse_cov",
    "f1",
    "theta_norm",
];
pub const AGGREGATE_COLUMNS: [&str; 8] = ["setting", "iteration", "metric", "median", "q1", "q3", "mean", "n"];
pub const SETTINGS_COLUMNS: [&str; 10] =
    ["setting", "family", "target", "d", "kappa", "method", "algorithm", "alpha", "tau", "regularizer"];
pub const SUMMARY_COLUMNS: [&str; 15] = [
    "setting",
    "replicate",
    "status",
    "reason",
    "iterations",
    "init_mse_mean",
    "final_mse_mean",
    "init_mse_cov",
    "final_mse_cov",
    "final_f1",
    "init_renyi_bound",
    "final_renyi_bound",
    "final_objective",
    "repairs",
    "test_mse_median",
];
pub const TEST_MSE_COLUMNS: [&str; 4] = ["setting", "replicate", "draw", "test_mse"];

/// Metrics aggregated per iteration. State metrics of runs that stopped early
/// are carried forward to the last iteration; per-step metrics are not.
const STATE_METRICS: [&str; 7] = ["objective", "renyi_bound", "ess", "mse_mean", "mse_cov", "f1", "theta_norm"];
const STEP_METRICS: [&str; 2] = ["step_kl", "repairs"];

fn metric(row: &TraceRow, name: &str) -> Option<f64> {
    match name {
        "objective" => row.objective,
        "renyi_bound" => row.renyi_bound,
        "ess" => row.ess,
        "mse_mean" => row.mse_mean,
        "mse_cov" => row.mse_cov,
        "f1" => row.f1,
        "theta_norm" => Some(row.theta_norm),
        "step_kl" => row.step_kl,
        "repairs" => Some(row.repairs as f64),
        _ => None,
    }
}

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub setting: String,
    pub iteration: usize,
    pub metric: &'static str,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    pub n: usize,
}

fn summarize(setting: &str, iteration: usize, metric: &'static str, mut v: Vec<f64>) -> Option<AggregateRow> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Some(AggregateRow {
        setting: setting.to_string(),
        iteration,
        metric,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        n: v.len(),
    })
}

/// Per-iteration statistics over replicates, ordered by setting, iteration
/// and metric, up to the longest replicate. Independent of the order of `results`.
pub fn aggregate(settings: &[Setting], results: &[ReplicateResult]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for (si, s) in settings.iter().enumerate() {
        let mut reps: Vec<&ReplicateResult> =
            results.iter().filter(|r| r.setting == si && !r.rows.is_empty()).collect();
        reps.sort_by_key(|r| r.replicate);
        if reps.is_empty() {
            continue;
        }
        let horizon = reps.iter().map(|r| r.rows.len() - 1).max().unwrap_or(0);
        for k in 0..=horizon {
            let mut names: Vec<&'static str> = STATE_METRICS.iter().chain(STEP_METRICS.iter()).copied().collect();
            names.sort_unstable();
            for name in names {
                let carry = STATE_METRICS.contains(&name);
                let values: Vec<f64> = reps
                    .iter()
                    .filter_map(|r| {
                        let row = match r.rows.get(k) {
                            Some(row) => row,
                            None if carry => r.rows.last()?,
                            None => return None,
                        };
                        metric(row, name)
                    })
                    .collect();
                if let Some(row) = summarize(&s.id, k, name, values) {
                    out.push(row);
                }
            }
        }
    }
    out
}

fn target_fields(t: &TargetInstance) -> (&'static str, usize, Option<f64>) {
    match t {
        TargetInstance::Gaussian { d, kappa } => ("gaussian", *d, Some(*kappa)),
        TargetInstance::Regression(spec) => ("regression", spec.d, None),
        TargetInstance::InFamily { mean, .. } => ("in_family", mean.len(), None),
    }
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

fn trace_path(dir: &Path, s: &Setting, r: usize) -> PathBuf {
    dir.join("traces").join(&s.id).join(format!("rep_{r:04}.csv"))
}

/// Writes one replicate trace.
pub fn write_trace(path: &Path, rows: &[TraceRow]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_COLUMNS)?;
    for row in rows {
        w.write_record([
            row.iteration.to_string(),
            opt(row.objective),
            opt(row.renyi_bound),
            opt(row.step_kl),
            opt(row.ess),
            u8::from(row.prox_active).to_string(),
            row.repairs.to_string(),
            opt(row.mse_mean),
            opt(row.mse_cov),
            opt(row.f1),
            fmt_f64(row.theta_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(AGGREGATE_COLUMNS)?;
    for a in rows {
        w.write_record([
            a.setting.clone(),
            a.iteration.to_string(),
            a.metric.to_string(),
            fmt_f64(a.median),
            fmt_f64(a.q1),
            fmt_f64(a.q3),
            fmt_f64(a.mean),
            a.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_settings(path: &Path, settings: &[Setting]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(SETTINGS_COLUMNS)?;
    for s in settings {
        let (kind, d, kappa) = target_fields(&s.target);
        w.write_record([
            s.id.clone(),
            s.family.name().to_string(),
            kind.to_string(),
            d.to_string(),
            opt(kappa),
            s.method.clone(),
            s.algorithm.name().to_string(),
            fmt_f64(s.alpha),
            fmt_f64(s.tau),
            s.regularizer.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn median_of(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile(&s, 0.5)
}

fn write_summary(path: &Path, settings: &[Setting], results: &[ReplicateResult]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for r in results {
        let (first, last) = (r.initial(), r.last());
        w.write_record([
            settings[r.setting].id.clone(),
            r.replicate.to_string(),
            r.status.clone(),
            r.reason.clone().unwrap_or_default(),
            last.map(|x| x.iteration.to_string()).unwrap_or_default(),
            opt(first.and_then(|x| x.mse_mean)),
            opt(last.and_then(|x| x.mse_mean)),
            opt(first.and_then(|x| x.mse_cov)),
            opt(last.and_then(|x| x.mse_cov)),
            opt(last.and_then(|x| x.f1)),
            opt(first.and_then(|x| x.renyi_bound)),
            opt(last.and_then(|x| x.renyi_bound)),
            opt(last.and_then(|x| x.objective)),
            r.rows.iter().map(|x| x.repairs).sum::<usize>().to_string(),
            opt(r.test_mse.as_deref().map(median_of)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_test_mse(path: &Path, settings: &[Setting], results: &[ReplicateResult]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(TEST_MSE_COLUMNS)?;
    for r in results {
        for (i, v) in r.test_mse.iter().flatten().enumerate() {
            w.write_record([settings[r.setting].id.clone(), r.replicate.to_string(), i.to_string(), fmt_f64(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    columns: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool: BTreeMap<&'static str, String>,
    experiment: &'static str,
    config: &'a ExperimentConfig,
    seeds: BTreeMap<&'static str, String>,
    n_settings: usize,
    n_replicates: usize,
    status_counts: BTreeMap<String, usize>,
    wall_time_s: f64,
    files: BTreeMap<&'static str, FileEntry>,
}

/// Writes every output of a run below `dir`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    settings: &[Setting],
    results: &[ReplicateResult],
    wall_time_s: f64,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for s in settings {
        let d = dir.join("traces").join(&s.id);
        fs::create_dir_all(&d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    for r in results {
        let s = &settings[r.setting];
        write_trace(&trace_path(dir, s, r.replicate), &r.rows)?;
        if let Some(params) = &r.params {
            let pdir = dir.join("params").join(&s.id);
            fs::create_dir_all(&pdir)?;
            let path = pdir.join(format!("rep_{:04}.json", r.replicate));
            fs::write(&path, serde_json::to_string(params)?)
                .with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    write_settings(&dir.join("settings.csv"), settings)?;
    write_aggregate(&dir.join("aggregate.csv"), &aggregate(settings, results))?;
    write_summary(&dir.join("summary.csv"), settings, results)?;
    let has_test_mse = results.iter().any(|r| r.test_mse.is_some());
    if has_test_mse {
        write_test_mse(&dir.join("test_mse.csv"), settings, results)?;
    }

    let mut files = BTreeMap::new();
    let entry = |p: &str, c: &[&'static str]| FileEntry { path: p.to_string(), columns: c.to_vec() };
    files.insert("traces", entry("traces/<setting>/rep_<replicate>.csv", &TRACE_COLUMNS));
    files.insert("settings", entry("settings.csv", &SETTINGS_COLUMNS));
    files.insert("aggregate", entry("aggregate.csv", &AGGREGATE_COLUMNS));
    files.insert("summary", entry("summary.csv", &SUMMARY_COLUMNS));
    if has_test_mse {
        files.insert("test_mse", entry("test_mse.csv", &TEST_MSE_COLUMNS));
    }
    if cfg.save_params {
        files.insert("params", entry("params/<setting>/rep_<replicate>.json", &[]));
    }
    let mut status_counts = BTreeMap::new();
    for r in results {
        *status_counts.entry(r.status.clone()).or_insert(0) += 1;
    }
    let tool = BTreeMap::from([
        ("name", env!("CARGO_PKG_NAME").to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("profile", if cfg!(debug_assertions) { "debug" } else { "release" }.to_string()),
        ("target", format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS)),
        ("rng", "ChaCha8 (seed_from_u64 + set_stream), ziggurat normals".to_string()),
    ]);
    let seeds = BTreeMap::from([
        ("seed", cfg.seed.to_string()),
        ("target_stream", "2r".to_string()),
        ("algorithm_stream", "2r+1".to_string()),
        ("predictive_stream", "2^32+r".to_string()),
    ]);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool,
        experiment: cfg.experiment.name(),
        config: cfg,
        seeds,
        n_settings: settings.len(),
        n_replicates: cfg.replicates(),
        status_counts,
        wall_time_s,
        files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
