//! Expanding a config into settings and running replicates.

use bregman_vi::algorithms::{mc_prmm, prmm_exact, vrb, McOptions, RunStatus, RunTrace, Schedule};
use bregman_vi::divergences::RenyiOrder;
use bregman_vi::expfam::{ExponentialFamily, NaturalParams, ParamsFile};
use bregman_vi::metrics::{f1_zero_pattern, param_mse, test_mse_distribution};
use bregman_vi::numerics::{RngStream, SymMatrix};
use bregman_vi::regularizers::Regularizer;
use bregman_vi::targets::{
    make_gaussian_target, make_regression_dataset, regression_target, GaussianTargetSpec, GroundTruth,
    RegressionDataset, RegressionSpec, Target,
};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{build_family, Algorithm, ExperimentConfig, FamilyName, MethodSpec, TargetSpec};

/// Target of one setting, with grids resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetInstance {
    Gaussian { d: usize, kappa: f64 },
    Regression(RegressionSpec),
    InFamily { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl TargetInstance {
    /// Dimension of the approximating family.
    pub fn param_dim(&self) -> usize {
        match self {
            TargetInstance::Gaussian { d, .. } => *d,
            TargetInstance::Regression(spec) => spec.d + 1,
            TargetInstance::InFamily { mean, .. } => mean.len(),
        }
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub id: String,
    pub family: FamilyName,
    pub target: TargetInstance,
    pub method: String,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub tau: f64,
    pub regularizer: Regularizer,
}

/// Per-iteration row of a replicate trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: Option<f64>,
    pub renyi_bound: Option<f64>,
    pub step_kl: Option<f64>,
    pub ess: Option<f64>,
    pub prox_active: bool,
    pub repairs: usize,
    pub mse_mean: Option<f64>,
    pub mse_cov: Option<f64>,
    pub f1: Option<f64>,
    pub theta_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub setting: usize,
    pub replicate: usize,
    /// `converged`, `max_iters`, `diverged` or `error`.
    pub status: String,
    pub reason: Option<String>,
    pub rows: Vec<TraceRow>,
    /// Predictive test errors at the final iterate (regression targets).
    pub test_mse: Option<Vec<f64>>,
    pub params: Option<Vec<ParamsFile>>,
}

impl ReplicateResult {
    pub fn initial(&self) -> Option<&TraceRow> {
        self.rows.first()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:e}").replace('.', "p")
}

/// Cartesian product families × targets × methods × α × τ, in that order.
pub fn expand_settings(cfg: &ExperimentConfig) -> Vec<Setting> {
    let targets: Vec<TargetInstance> = match cfg.target.as_ref().expect("normalized config") {
        TargetSpec::Gaussian { d, kappa } => d
            .to_vec()
            .into_iter()
            .flat_map(|d| kappa.to_vec().into_iter().map(move |kappa| TargetInstance::Gaussian { d, kappa }))
            .collect(),
        TargetSpec::Regression { d, j, j_test, sigma2, s, rho } => {
            vec![TargetInstance::Regression(RegressionSpec {
                d: *d,
                j: *j,
                j_test: *j_test,
                sigma2: *sigma2,
                s: *s,
                rho: *rho,
            })]
        }
        TargetSpec::InFamily { mean, cov } => vec![TargetInstance::InFamily { mean: mean.clone(), cov: cov.clone() }],
    };
    let mut out = Vec::new();
    for family in cfg.families() {
        for target in &targets {
            for m in cfg.methods() {
                for alpha in cfg.alphas() {
                    for tau in m.tau.to_vec() {
                        out.push(setting(family, target, m, alpha, tau));
                    }
                }
            }
        }
    }
    out
}

fn setting(family: FamilyName, target: &TargetInstance, m: &MethodSpec, alpha: f64, tau: f64) -> Setting {
    let fam_tag = match family {
        FamilyName::FullGaussian => "G",
        FamilyName::DiagGaussian => "dG",
    };
    let target_tag = match target {
        TargetInstance::Gaussian { d, kappa } => format!("d{d}_k{}", fmt_num(*kappa)),
        TargetInstance::Regression(spec) => format!("reg{}", spec.d),
        TargetInstance::InFamily { mean, .. } => format!("fixed{}", mean.len()),
    };
    let dim = target.param_dim();
    Setting {
        id: format!("{}_{fam_tag}_{target_tag}_a{}_t{}", m.label(), fmt_num(alpha), fmt_num(tau)),
        family,
        target: target.clone(),
        method: m.label().to_string(),
        algorithm: m.algorithm,
        alpha,
        tau,
        regularizer: m.regularizer.build(dim).expect("validated config"),
    }
}

/// Random stream of the target for replicate `r`; shared by all settings so
/// that methods are compared on the same targets.
pub fn target_stream(seed: u64, r: usize) -> RngStream {
    RngStream::new(seed, 2 * r as u64)
}

/// Random stream of the algorithm for replicate `r`.
pub fn algorithm_stream(seed: u64, r: usize) -> RngStream {
    RngStream::new(seed, 2 * r as u64 + 1)
}

/// Random stream of the posterior draws behind the predictive test error.
pub fn predictive_stream(seed: u64, r: usize) -> RngStream {
    RngStream::new(seed, (1 << 32) + r as u64)
}

enum Built {
    Plain(Target),
    Regression(Target, RegressionDataset),
}

fn build_target(t: &TargetInstance, rng: &mut RngStream) -> bregman_vi::Result<Built> {
    Ok(match t {
        TargetInstance::Gaussian { d, kappa } => {
            Built::Plain(make_gaussian_target(&GaussianTargetSpec::new(*d, *kappa), rng)?)
        }
        TargetInstance::Regression(spec) => {
            let data = make_regression_dataset(spec, rng)?;
            Built::Regression(regression_target(&data), data)
        }
        TargetInstance::InFamily { mean, cov } => {
            let d = mean.len();
            let sigma = SymMatrix::try_from(cov.clone())?;
            let theta_pi = ExponentialFamily::full_gaussian(d).from_mean_cov(mean, &sigma)?;
            let precision = bregman_vi::numerics::cholesky(&sigma)?.inverse();
            let mu = DVector::from_column_slice(mean);
            let m = mu.clone();
            let target = Target::new(d, move |x: &[f64]| {
                let r = DVector::from_column_slice(x) - &m;
                -0.5 * r.dot(&precision.mul_vec(&r))
            });
            Built::Plain(target.with_ground_truth(GroundTruth::Gaussian { mu_bar: mu, sigma_bar: sigma, theta_pi }))
        }
    })
}

/// `θ0` with mean `mean·1` and covariance `cov_scale·I`.
pub fn initial_theta(fam: &ExponentialFamily, mean: f64, cov_scale: f64) -> bregman_vi::Result<NaturalParams> {
    let d = fam.dim();
    fam.from_mean_cov(&vec![mean; d], &SymMatrix::identity(d).scaled(cov_scale))
}

/// Runs one replicate of one setting. Numerical failures are recorded in
/// the result rather than returned.
pub fn run_replicate(cfg: &ExperimentConfig, settings: &[Setting], index: usize, replicate: usize) -> ReplicateResult {
    let s = &settings[index];
    let mut result = ReplicateResult {
        setting: index,
        replicate,
        status: "error".into(),
        reason: None,
        rows: Vec::new(),
        test_mse: None,
        params: None,
    };
    match run_inner(cfg, s, replicate, &mut result) {
        Ok(()) => {}
        Err(e) => result.reason = Some(e.to_string()),
    }
    result
}

fn run_inner(
    cfg: &ExperimentConfig,
    s: &Setting,
    replicate: usize,
    out: &mut ReplicateResult,
) -> bregman_vi::Result<()> {
    let fam = build_family(s.family, s.target.param_dim());
    let built = build_target(&s.target, &mut target_stream(cfg.seed, replicate))?;
    let (target, data) = match &built {
        Built::Plain(t) => (t, None),
        Built::Regression(t, d) => (t, Some(d)),
    };
    let theta0 = initial_theta(&fam, cfg.init.mean, cfg.init.cov_scale)?;
    let alpha = RenyiOrder::new(s.alpha)?;
    let schedule = Schedule::constant(s.tau, cfg.n_samples, cfg.max_iters).with_stop_tol(cfg.stop_tol);
    let mut rng = algorithm_stream(cfg.seed, replicate);
    let trace: RunTrace = match s.algorithm {
        Algorithm::PrmmExact => {
            let provider = target.in_family(&fam).ok_or_else(|| {
                bregman_vi::Error::InvalidInput("prmm_exact needs a target in the approximating family".into())
            })?;
            prmm_exact(&fam, &provider, &s.regularizer, alpha, &schedule, &theta0)?
        }
        Algorithm::McPrmm => {
            let options = McOptions { strict: cfg.strict };
            mc_prmm(&fam, target, &s.regularizer, alpha, &schedule, &theta0, &mut rng, options)?
        }
        Algorithm::Vrb => vrb(&fam, target, alpha, &schedule, &theta0, &mut rng)?,
    };

    let mut rows = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        let mut row = TraceRow {
            iteration: rec.k,
            objective: rec.objective,
            renyi_bound: rec.renyi_bound,
            step_kl: rec.step_kl,
            ess: rec.ess,
            prox_active: rec.prox_active,
            repairs: rec.repairs,
            theta_norm: rec.theta.norm(),
            ..Default::default()
        };
        match target.ground_truth() {
            Some(GroundTruth::Gaussian { mu_bar, sigma_bar, .. }) => {
                let (a, b) = param_mse(&fam, &rec.theta, mu_bar, sigma_bar)?;
                row.mse_mean = Some(a);
                row.mse_cov = Some(b);
            }
            Some(GroundTruth::Regression { beta_bar }) => {
                let (mu, _) = fam.mean_cov(&rec.theta)?;
                row.mse_mean = Some((&mu - beta_bar).norm_squared());
                row.f1 = Some(f1_zero_pattern(mu.as_slice(), beta_bar.as_slice(), cfg.zero_tol)?);
            }
            None => {}
        }
        rows.push(row);
    }
    if let Some(data) = data {
        let mut rng = predictive_stream(cfg.seed, replicate);
        out.test_mse = Some(test_mse_distribution(&fam, trace.final_theta(), data, cfg.n_beta, &mut rng)?);
    }
    if cfg.save_params {
        out.params = Some(trace.records.iter().map(|r| fam.params_to_json(&r.theta)).collect());
    }
    out.rows = rows;
    out.status = trace.status.label().to_string();
    if let RunStatus::Diverged(reason) = &trace.status {
        out.reason = Some(reason.clone());
    }
    Ok(())
}

/// Runs every replicate of every setting on a pool of `jobs` threads.
/// Results are ordered by setting, then replicate.
pub fn run_all(cfg: &ExperimentConfig, settings: &[Setting], jobs: usize) -> anyhow::Result<Vec<ReplicateResult>> {
    let tasks: Vec<(usize, usize)> =
        (0..settings.len()).flat_map(|s| (0..cfg.replicates()).map(move |r| (s, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| tasks.par_iter().map(|&(s, r)| run_replicate(cfg, settings, s, r)).collect()))
}
