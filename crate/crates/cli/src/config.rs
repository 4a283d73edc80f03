//! Experiment configuration: JSON schema, defaults and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use bregman_vi::regularizers::Regularizer;
use serde::{Deserialize, Serialize};

/// A scalar or a grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn many(v: Vec<T>) -> Self {
        if v.len() == 1 {
            OneOrMany::One(v[0].clone())
        } else {
            OneOrMany::Many(v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GaussianSweep,
    Sensitivity,
    Regression,
    SingleRun,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::GaussianSweep,
        ExperimentKind::Sensitivity,
        ExperimentKind::Regression,
        ExperimentKind::SingleRun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GaussianSweep => "gaussian_sweep",
            ExperimentKind::Sensitivity => "sensitivity",
            ExperimentKind::Regression => "regression",
            ExperimentKind::SingleRun => "single_run",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    FullGaussian,
    DiagGaussian,
}

impl FamilyName {
    pub fn name(self) -> &'static str {
        match self {
            FamilyName::FullGaussian => "full_gaussian",
            FamilyName::DiagGaussian => "diag_gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PrmmExact,
    McPrmm,
    Vrb,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PrmmExact => "prmm_exact",
            Algorithm::McPrmm => "mc_prmm",
            Algorithm::Vrb => "vrb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Random Gaussian with mean in `[−0.5, 0.5]^d` and condition number `κ`.
    Gaussian { d: OneOrMany<usize>, kappa: OneOrMany<f64> },
    /// Sparse sigmoid regression posterior.
    Regression {
        #[serde(default = "d5")]
        d: usize,
        #[serde(default = "j100")]
        j: usize,
        #[serde(default = "j50")]
        j_test: usize,
        #[serde(default = "half")]
        sigma2: f64,
        #[serde(default = "five")]
        s: f64,
        #[serde(default = "half")]
        rho: f64,
    },
    /// Fixed Gaussian target given by its mean and covariance.
    InFamily { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

fn d5() -> usize {
    5
}
fn j100() -> usize {
    100
}
fn j50() -> usize {
    50
}
fn half() -> f64 {
    0.5
}
fn five() -> f64 {
    5.0
}

/// Regularizer as written in a config. `eta` may be a scalar weight.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerSpec {
    #[default]
    Null,
    EigenBox {
        b1: f64,
        b2: f64,
    },
    SparseMeanL1 {
        eta: OneOrMany<f64>,
        #[serde(default)]
        skip_index_0: bool,
    },
}

impl RegularizerSpec {
    pub fn build(&self, dim: usize) -> bregman_vi::Result<Regularizer> {
        match self {
            RegularizerSpec::Null => Ok(Regularizer::Null),
            RegularizerSpec::EigenBox { b1, b2 } => Regularizer::eigen_box(*b1, *b2),
            RegularizerSpec::SparseMeanL1 { eta: OneOrMany::One(e), skip_index_0 } => {
                Regularizer::uniform_l1(*e, dim, *skip_index_0)
            }
            RegularizerSpec::SparseMeanL1 { eta: OneOrMany::Many(v), skip_index_0 } => {
                Regularizer::sparse_mean_l1(v.clone(), *skip_index_0)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::Null => "null",
            RegularizerSpec::EigenBox { .. } => "eigen_box",
            RegularizerSpec::SparseMeanL1 { .. } => "sparse_mean_l1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub algorithm: Algorithm,
    /// Name used in setting ids; defaults to the algorithm name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub tau: OneOrMany<f64>,
    #[serde(default)]
    pub regularizer: RegularizerSpec,
}

impl MethodSpec {
    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.algorithm.name())
    }
}

/// `θ0`: mean `mean·1`, covariance `cov_scale·I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "init_mean")]
    pub mean: f64,
    #[serde(default = "init_cov")]
    pub cov_scale: f64,
}

fn init_mean() -> f64 {
    5.0
}
fn init_cov() -> f64 {
    10.0
}

impl Default for InitSpec {
    fn default() -> Self {
        Self { mean: init_mean(), cov_scale: init_cov() }
    }
}

/// A config file. Fields left out are filled by [`ExperimentConfig::normalize`].
///
/// Methods are given either as a `methods` list or through the single-method
/// shorthand `algorithm` + `tau` + `regularizer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<OneOrMany<FamilyName>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<MethodSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<RegularizerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<OneOrMany<f64>>,
    #[serde(default = "n500", alias = "N")]
    pub n_samples: usize,
    #[serde(default = "k100", alias = "K")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_replicates: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    /// Stop once `KL(q_θk, q_θk+1)` falls to this value.
    #[serde(default)]
    pub stop_tol: f64,
    /// Posterior draws for the predictive test error (regression only).
    #[serde(default = "n_beta")]
    pub n_beta: usize,
    #[serde(default)]
    pub zero_tol: f64,
    /// End Monte Carlo PRMM runs instead of repairing covariance estimates.
    #[serde(default)]
    pub strict: bool,
    /// Also write per-iteration parameters of every replicate.
    #[serde(default)]
    pub save_params: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn n500() -> usize {
    500
}
fn k100() -> usize {
    100
}
fn n_beta() -> usize {
    bregman_vi::metrics::DEFAULT_N_BETA
}

/// Schema violation, with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { path: path.into(), message: message.into() })
}

const SENSITIVITY_TAUS: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0];

impl ExperimentConfig {
    /// A config with only the experiment set.
    pub fn empty(experiment: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment.name() })).expect("minimal config parses")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError { path: String::new(), message: e.to_string() })
    }

    /// Parses and normalizes a config file.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(Self::from_json(&text)?.normalize()?)
    }

    pub fn methods(&self) -> &[MethodSpec] {
        self.methods.as_deref().unwrap_or(&[])
    }

    pub fn families(&self) -> Vec<FamilyName> {
        self.family.as_ref().map(|f| f.to_vec()).unwrap_or_default()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.alpha.as_ref().map(|a| a.to_vec()).unwrap_or_default()
    }

    pub fn replicates(&self) -> usize {
        self.n_replicates.unwrap_or(1)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(self.experiment.name()))
    }

    /// Fills experiment-dependent defaults and checks ranges.
    pub fn normalize(mut self) -> Result<Self, ConfigError> {
        use ExperimentKind::*;
        let shorthand = self.algorithm.is_some() || self.tau.is_some() || self.regularizer.is_some();
        if shorthand {
            if self.methods.is_some() {
                return err("methods", "give either `methods` or `algorithm`/`tau`/`regularizer`, not both");
            }
            let Some(algorithm) = self.algorithm.take() else {
                return err("algorithm", "required when `tau` or `regularizer` is given");
            };
            let tau = match self.tau.take() {
                Some(t) => t,
                None => OneOrMany::One(default_tau(self.experiment, algorithm)),
            };
            let regularizer = self.regularizer.take().unwrap_or_default();
            self.methods = Some(vec![MethodSpec { algorithm, label: None, tau, regularizer }]);
        }

        let exp = self.experiment;
        if self.family.is_none() {
            self.family = Some(match exp {
                Sensitivity => OneOrMany::Many(vec![FamilyName::FullGaussian, FamilyName::DiagGaussian]),
                Regression => OneOrMany::One(FamilyName::DiagGaussian),
                GaussianSweep | SingleRun => OneOrMany::One(FamilyName::FullGaussian),
            });
        }
        if self.target.is_none() {
            self.target = Some(match exp {
                GaussianSweep => {
                    TargetSpec::Gaussian { d: OneOrMany::Many(vec![5, 10, 20, 40]), kappa: OneOrMany::One(10.0) }
                }
                Sensitivity => TargetSpec::Gaussian { d: OneOrMany::One(5), kappa: OneOrMany::One(10.0) },
                Regression => TargetSpec::Regression { d: 5, j: 100, j_test: 50, sigma2: 0.5, s: 5.0, rho: 0.5 },
                SingleRun => TargetSpec::InFamily { mean: vec![0.5, -0.5], cov: vec![vec![1.0, 0.3], vec![0.3, 0.5]] },
            });
        }
        if self.methods.is_none() {
            self.methods = Some(match exp {
                GaussianSweep => vec![method(Algorithm::McPrmm, None, vec![0.25, 0.5, 1.0], RegularizerSpec::Null)],
                Sensitivity => vec![
                    method(Algorithm::McPrmm, None, SENSITIVITY_TAUS.to_vec(), RegularizerSpec::Null),
                    method(Algorithm::Vrb, None, SENSITIVITY_TAUS.to_vec(), RegularizerSpec::Null),
                ],
                Regression => vec![
                    method(
                        Algorithm::McPrmm,
                        Some("prmm"),
                        vec![0.1],
                        RegularizerSpec::SparseMeanL1 { eta: OneOrMany::One(1.0), skip_index_0: true },
                    ),
                    method(Algorithm::McPrmm, Some("rmm"), vec![0.1], RegularizerSpec::Null),
                    method(Algorithm::Vrb, None, vec![1e-3], RegularizerSpec::Null),
                ],
                SingleRun => vec![method(Algorithm::PrmmExact, None, vec![1.0], RegularizerSpec::Null)],
            });
        }
        if self.alpha.is_none() {
            self.alpha = Some(match exp {
                GaussianSweep | Sensitivity => OneOrMany::Many(vec![0.5, 1.0]),
                Regression | SingleRun => OneOrMany::One(1.0),
            });
        }
        if self.n_replicates.is_none() {
            self.n_replicates = Some(if exp == SingleRun { 1 } else { 20 });
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let families = self.families();
        if families.is_empty() {
            return err("family", "grid is empty");
        }
        let alphas = self.alphas();
        if alphas.is_empty() {
            return err("alpha", "grid is empty");
        }
        for (i, a) in alphas.iter().enumerate() {
            if !(*a > 0.0 && a.is_finite()) {
                return err(format!("alpha[{i}]"), format!("must be a positive finite number, got {a}"));
            }
        }
        if self.replicates() == 0 {
            return err("n_replicates", "must be at least 1");
        }
        if !(self.stop_tol >= 0.0) {
            return err("stop_tol", "must be non-negative");
        }
        if !(self.zero_tol >= 0.0) {
            return err("zero_tol", "must be non-negative");
        }
        if !(self.init.cov_scale > 0.0 && self.init.cov_scale.is_finite()) || !self.init.mean.is_finite() {
            return err("init", "mean must be finite and cov_scale positive");
        }
        let dims = self.validate_target()?;

        let methods = self.methods();
        if methods.is_empty() {
            return err("methods", "list is empty");
        }
        for (m, spec) in methods.iter().enumerate() {
            let at = |field: &str| format!("methods[{m}].{field}");
            let taus = spec.tau.to_vec();
            if taus.is_empty() {
                return err(at("tau"), "grid is empty");
            }
            for (i, t) in taus.iter().enumerate() {
                let ok = match spec.algorithm {
                    Algorithm::PrmmExact | Algorithm::McPrmm => *t > 0.0 && *t <= 1.0,
                    Algorithm::Vrb => *t > 0.0 && t.is_finite(),
                };
                if !ok {
                    let range = if spec.algorithm == Algorithm::Vrb { "τ > 0" } else { "τ ∈ (0, 1]" };
                    return err(
                        format!("methods[{m}].tau[{i}]"),
                        format!("{} needs {range}, got {t}", spec.algorithm.name()),
                    );
                }
            }
            if spec.algorithm != Algorithm::PrmmExact && self.n_samples < 2 {
                return err("n_samples", "Monte Carlo methods need at least 2 samples");
            }
            if spec.algorithm == Algorithm::PrmmExact {
                if let Some(i) = alphas.iter().position(|a| *a > 1.0) {
                    return err(format!("alpha[{i}]"), "prmm_exact needs α ∈ (0, 1]");
                }
                if families.contains(&FamilyName::DiagGaussian)
                    || matches!(self.target, Some(TargetSpec::Regression { .. }))
                {
                    return err(at("algorithm"), "prmm_exact needs a Gaussian target and the full_gaussian family");
                }
            }
            if spec.algorithm == Algorithm::Vrb && spec.regularizer != RegularizerSpec::Null {
                return err(at("regularizer"), "vrb takes no regularizer");
            }
            for fam in &families {
                for d in &dims {
                    let reg = spec
                        .regularizer
                        .build(*d)
                        .map_err(|e| ConfigError { path: at("regularizer"), message: e.to_string() })?;
                    let f = build_family(*fam, *d);
                    reg.check_family(&f)
                        .map_err(|e| ConfigError { path: at("regularizer"), message: e.to_string() })?;
                }
            }
            if let Some(label) = &spec.label {
                if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return err(at("label"), "use letters, digits, `_` or `-`");
                }
            }
        }
        let mut labels: Vec<&str> = methods.iter().map(|m| m.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return err("methods", "method labels must be distinct; set `label`");
        }
        Ok(())
    }

    /// Parameter dimensions implied by the target.
    fn validate_target(&self) -> Result<Vec<usize>, ConfigError> {
        match self.target.as_ref().expect("filled by normalize") {
            TargetSpec::Gaussian { d, kappa } => {
                let ds = d.to_vec();
                let ks = kappa.to_vec();
                if ds.is_empty() {
                    return err("target.d", "grid is empty");
                }
                if ks.is_empty() {
                    return err("target.kappa", "grid is empty");
                }
                if let Some(i) = ds.iter().position(|d| *d == 0) {
                    return err(format!("target.d[{i}]"), "dimension must be positive");
                }
                if let Some(i) = ks.iter().position(|k| !(*k >= 1.0 && k.is_finite())) {
                    return err(format!("target.kappa[{i}]"), "condition number must be ≥ 1");
                }
                Ok(ds)
            }
            TargetSpec::Regression { d, j, j_test, sigma2, s, rho } => {
                if *d < 2 {
                    return err("target.d", "regression needs d ≥ 2");
                }
                if *j == 0 || *j_test == 0 {
                    return err("target.j", "training and test sets must be non-empty");
                }
                if !(*sigma2 > 0.0) {
                    return err("target.sigma2", "must be positive");
                }
                if !(*s > 0.0) {
                    return err("target.s", "must be positive");
                }
                if !(*rho > 0.0 && *rho < 1.0) {
                    return err("target.rho", "must lie in (0, 1)");
                }
                Ok(vec![d + 1])
            }
            TargetSpec::InFamily { mean, cov } => {
                let d = mean.len();
                if d == 0 {
                    return err("target.mean", "must be non-empty");
                }
                if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    return err("target.cov", format!("must be a {d}×{d} matrix"));
                }
                let m = bregman_vi::numerics::SymMatrix::try_from(cov.clone())
                    .map_err(|e| ConfigError { path: "target.cov".into(), message: e.to_string() })?;
                bregman_vi::numerics::cholesky(&m)
                    .map_err(|_| ConfigError { path: "target.cov".into(), message: "not positive definite".into() })?;
                Ok(vec![d])
            }
        }
    }
}

fn method(algorithm: Algorithm, label: Option<&str>, tau: Vec<f64>, regularizer: RegularizerSpec) -> MethodSpec {
    MethodSpec { algorithm, label: label.map(String::from), tau: OneOrMany::many(tau), regularizer }
}

fn default_tau(exp: ExperimentKind, algorithm: Algorithm) -> f64 {
    match (exp, algorithm) {
        (_, Algorithm::Vrb) => 1e-3,
        (ExperimentKind::Regression, _) => 0.1,
        (ExperimentKind::SingleRun, Algorithm::PrmmExact) => 1.0,
        _ => 0.5,
    }
}

pub fn build_family(name: FamilyName, dim: usize) -> bregman_vi::expfam::ExponentialFamily {
    match name {
        FamilyName::FullGaussian => bregman_vi::expfam::ExponentialFamily::full_gaussian(dim),
        FamilyName::DiagGaussian => bregman_vi::expfam::ExponentialFamily::diag_gaussian(dim),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_fully_defaulted() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::empty(kind).normalize().unwrap();
            assert!(cfg.family.is_some() && cfg.target.is_some() && cfg.methods.is_some() && cfg.alpha.is_some());
            assert_eq!(cfg.n_samples, 500);
            assert_eq!(cfg.max_iters, 100);
            assert_eq!(cfg.init, InitSpec { mean: 5.0, cov_scale: 10.0 });
            // Normalizing twice changes nothing.
            assert_eq!(cfg.clone().normalize().unwrap(), cfg);
        }
    }

    #[test]
    fn prmm_step_above_one_is_rejected() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "single_run", "algorithm": "mc_prmm", "tau": 1.5}"#)
            .unwrap()
            .normalize()
            .unwrap_err();
        assert_eq!(cfg.path, "methods[0].tau[0]");
        assert!(cfg.message.contains("(0, 1]"));
    }

    #[test]
    fn vrb_step_above_one_is_accepted() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment": "single_run", "algorithm": "vrb", "tau": 1.5, "target": {"kind": "gaussian", "d": 2, "kappa": 10}}"#,
        )
        .unwrap()
        .normalize()
        .unwrap();
        assert_eq!(cfg.methods()[0].tau, OneOrMany::One(1.5));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "regression", "alpha": [1.0, -1.0]}"#)
            .unwrap()
            .normalize()
            .unwrap_err();
        assert_eq!(e.path, "alpha[1]");
        let e = ExperimentConfig::from_json(
            r#"{"experiment": "regression", "methods": [{"algorithm": "mc_prmm", "tau": 0.1, "regularizer": {"kind": "eigen_box", "b1": 0.5, "b2": 2}}]}"#,
        )
        .unwrap()
        .normalize()
        .unwrap_err();
        assert_eq!(e.path, "methods[0].regularizer");
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "regression", "typo": 1}"#).is_err());
        let e = ExperimentConfig::from_json(r#"{"experiment": "regression", "methods": [], "tau": 0.1}"#)
            .unwrap()
            .normalize()
            .unwrap_err();
        assert_eq!(e.path, "methods");
    }

    #[test]
    fn aliases_and_grids() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "gaussian_sweep", "N": 100, "K": 7, "alpha": 0.5}"#)
            .unwrap()
            .normalize()
            .unwrap();
        assert_eq!((cfg.n_samples, cfg.max_iters), (100, 7));
        assert_eq!(cfg.alphas(), vec![0.5]);
        assert_eq!(cfg.methods()[0].tau.to_vec(), vec![0.25, 0.5, 1.0]);
    }
}
