//! Canned configs printed by `bvi demo`.

use crate::config::{ExperimentConfig, ExperimentKind};

/// The fully defaulted config of `kind`, writing to `out/<experiment>`.
/// The single run also keeps per-iteration parameters.
pub fn demo_config(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::empty(kind).normalize().expect("defaults are valid");
    cfg.output_dir = Some(cfg.output_dir());
    cfg.save_params = kind == ExperimentKind::SingleRun;
    cfg
}

pub fn demo_json(kind: ExperimentKind) -> String {
    serde_json::to_string_pretty(&demo_config(kind)).expect("config serializes") + "\n"
}
