//! Experiment harness for Bregman proximal variational inference.
//!
//! A JSON config is normalized ([`config`]), expanded into a grid of
//! settings, run replicate by replicate on a thread pool ([`run`]) and
//! written out as CSV traces, aggregates and a manifest ([`output`]).

pub mod config;
pub mod demo;
pub mod output;
pub mod run;

use std::path::Path;
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};

/// Runs a normalized config and writes its outputs to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> anyhow::Result<Vec<run::ReplicateResult>> {
    let start = Instant::now();
    let settings = run::expand_settings(cfg);
    let results = run::run_all(cfg, &settings, jobs)?;
    output::write_outputs(out, cfg, &settings, &results, start.elapsed().as_secs_f64())?;
    Ok(results)
}
