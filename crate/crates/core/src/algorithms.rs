//! Iterative schemes.
//!
//! * [`prmm_exact`]: proximal relaxed moment matching with exact moments of
//!   the geometric average,
//!   `η_{k+½} = τ π_{θk}^(α)(Γ) + (1 − τ) q_{θk}(Γ)`, `θ_{k+1} = prox_{τr}(η_{k+½})`.
//! * [`mc_prmm`]: the same step with `π_{θk}^(α)(Γ)` replaced by the
//!   self-normalized estimate `Σ w̄ₗ Γ(xₗ)`, `xₗ ∼ q_{θk}`,
//!   `log wₗ = α (log π̃(xₗ) − log q_{θk}(xₗ))`.
//! * [`vrb`]: the Euclidean step `θ_{k+1} = θk + τ (Σ w̄ₗ Γ(xₗ) − q_{θk}(Γ))`.
//!
//! Every run returns a [`RunTrace`] whose record `k` describes `θk`; the
//! step divergence stored in record `k` is `KL(q_{θk}, q_{θ_{k+1}})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::divergences::{kl_in_family, GeometricAverage, RenyiOrder};
use crate::error::{Error, Result};
use crate::expfam::{Covariance, ExponentialFamily, MatrixBlock, MeanParams, MomentForm, NaturalParams, ParamVector};
use crate::numerics::{log_sum_exp, sym_eigen, RngStream, SymMatrix};
use crate::regularizers::Regularizer;
use crate::targets::Target;

/// Relative eigenvalue floor used to repair an estimated covariance.
pub const REPAIR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerIteration<T> {
    Constant(T),
    List(Vec<T>),
}

impl<T: Copy> PerIteration<T> {
    /// Value used to produce `θ_{k+1}`.
    pub fn at(&self, k: usize) -> T {
        match self {
            PerIteration::Constant(v) => *v,
            PerIteration::List(v) => v[k],
        }
    }

    fn values(&self, k_max: usize) -> Vec<T> {
        match self {
            PerIteration::Constant(v) => vec![*v; k_max.min(1)],
            PerIteration::List(v) => v.iter().take(k_max).copied().collect(),
        }
    }

    fn covers(&self, k_max: usize) -> bool {
        match self {
            PerIteration::Constant(_) => true,
            PerIteration::List(v) => v.len() >= k_max,
        }
    }
}

/// Step sizes `τk`, sample sizes `Nk`, iteration budget `K` and stopping
/// tolerance on `KL(q_{θk}, q_{θ_{k+1}})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub tau: PerIteration<f64>,
    pub n_samples: PerIteration<usize>,
    pub max_iters: usize,
    #[serde(default)]
    pub stop_tol: f64,
}

impl Schedule {
    /// Constant `τ` and `N` for `K` iterations; `ε_stop = 0`.
    pub fn constant(tau: f64, n_samples: usize, max_iters: usize) -> Self {
        Self {
            tau: PerIteration::Constant(tau),
            n_samples: PerIteration::Constant(n_samples),
            max_iters,
            stop_tol: 0.0,
        }
    }

    pub fn with_stop_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn with_step_sizes(mut self, taus: Vec<f64>) -> Self {
        self.tau = PerIteration::List(taus);
        self
    }

    pub fn with_sample_sizes(mut self, sizes: Vec<usize>) -> Self {
        self.n_samples = PerIteration::List(sizes);
        self
    }

    fn validate_common(&self) -> Result<()> {
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidInput(format!("stop tolerance must be ≥ 0, got {}", self.stop_tol)));
        }
        if !self.tau.covers(self.max_iters) {
            return Err(Error::InvalidInput("step-size list is shorter than the iteration budget".into()));
        }
        Ok(())
    }

    /// Step sizes in `(0, 1]`.
    pub fn validate_prmm(&self) -> Result<()> {
        self.validate_common()?;
        for t in self.tau.values(self.max_iters) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidInput(format!("PRMM step sizes must lie in (0, 1], got {t}")));
            }
        }
        Ok(())
    }

    /// Step sizes in `(0, ∞)`.
    pub fn validate_vrb(&self) -> Result<()> {
        self.validate_common()?;
        for t in self.tau.values(self.max_iters) {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput(format!("VRB step sizes must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Sample sizes of at least 2.
    pub fn validate_samples(&self) -> Result<()> {
        if !self.n_samples.covers(self.max_iters + 1) {
            return Err(Error::InvalidInput("sample-size list is shorter than the iteration budget".into()));
        }
        for n in self.n_samples.values(self.max_iters + 1) {
            if n < 2 {
                return Err(Error::InvalidInput(format!("sample sizes must be ≥ 2, got {n}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// End the run instead of repairing an estimate that leaves dom A*.
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged(String),
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max_iters",
            RunStatus::Diverged(_) => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub theta: NaturalParams,
    /// `F(θk) = RD_α(π, q_{θk}) + r(θk)` when `π` is available in closed form.
    pub objective: Option<f64>,
    /// Rényi bound estimated from the batch drawn at `θk`.
    pub renyi_bound: Option<f64>,
    /// `KL(q_{θk}, q_{θ_{k+1}})`; absent on the last record of a run.
    pub step_kl: Option<f64>,
    pub ess: Option<f64>,
    /// Whether the prox moved the point producing `θ_{k+1}`.
    pub prox_active: bool,
    /// Covariance repairs applied while producing `θ_{k+1}`.
    pub repairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunTrace {
    pub fn final_theta(&self) -> &NaturalParams {
        &self.records.last().expect("a trace has at least one record").theta
    }

    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("a trace has at least one record")
    }

    pub fn total_repairs(&self) -> usize {
        self.records.iter().map(|r| r.repairs).sum()
    }

    pub fn objectives(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.objective).collect()
    }
}

/// Samples from `q_θ` with their importance weights `(π̃/q_θ)^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBatch {
    pub samples: Vec<DVector<f64>>,
    /// `α (log π̃(xₗ) − log q_θ(xₗ))`.
    pub log_weights: Vec<f64>,
    pub normalized_weights: Vec<f64>,
    /// `1 / Σ w̄ₗ²`.
    pub ess: f64,
}

impl WeightedBatch {
    /// Draws `n` samples from `q_θ` and weights them. Fails with
    /// `OracleFailure` when no weight is positive and finite.
    pub fn draw(
        fam: &ExponentialFamily,
        target: &Target,
        alpha: RenyiOrder,
        theta: &NaturalParams,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<WeightedBatch> {
        if target.dim() != fam.dim() {
            return Err(Error::InvalidInput(format!(
                "target dimension {} does not match family dimension {}",
                target.dim(),
                fam.dim()
            )));
        }
        let samples = fam.sample(theta, n, rng)?;
        let log_q = fam.log_density_many(theta, &samples)?;
        let a = alpha.alpha();
        let log_weights: Vec<f64> = samples
            .iter()
            .zip(log_q)
            .map(|(x, lq)| {
                let lw = a * (target.log_unnormalized(x.as_slice()) - lq);
                if lw.is_nan() || lw == f64::INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lw
                }
            })
            .collect();
        Self::from_log_weights(samples, log_weights)
    }

    pub fn from_log_weights(samples: Vec<DVector<f64>>, log_weights: Vec<f64>) -> Result<WeightedBatch> {
        if samples.len() != log_weights.len() || samples.is_empty() {
            return Err(Error::InvalidInput("a batch needs as many weights as samples, at least one".into()));
        }
        let lse = log_sum_exp(&log_weights)?;
        if !lse.is_finite() {
            return Err(Error::OracleFailure("every importance weight is zero".into()));
        }
        let normalized_weights: Vec<f64> = log_weights.iter().map(|lw| (lw - lse).exp()).collect();
        let ess = 1.0 / normalized_weights.iter().map(|w| w * w).sum::<f64>();
        Ok(WeightedBatch { samples, log_weights, normalized_weights, ess })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `Σ w̄ₗ Γ(xₗ)`, the estimate of `π_θ^(α)(Γ)`. Not validated as mean
    /// parameters.
    pub fn weighted_statistics(&self, fam: &ExponentialFamily) -> Result<ParamVector> {
        let d = fam.dim();
        let frame = fam.frame();
        let mut s1 = DVector::zeros(d);
        let mut s2 = DMatrix::zeros(d, d);
        let mut diag2 = DVector::zeros(d);
        for (x, w) in self.samples.iter().zip(&self.normalized_weights) {
            if *w == 0.0 {
                continue;
            }
            match frame {
                Some(q) => {
                    let y = q.transpose() * x;
                    s1.axpy(*w, &y, 1.0);
                    diag2.axpy(*w, &y.component_mul(&y), 1.0);
                }
                None => {
                    s1.axpy(*w, x, 1.0);
                    s2.ger(*w, x, x, 1.0);
                }
            }
        }
        let zero = fam.zero_param();
        Ok(match (&zero.matrix, frame) {
            (MatrixBlock::Sym(_), _) => ParamVector::new(s1, MatrixBlock::Sym(SymMatrix::new(s2)?)),
            (MatrixBlock::Diag(_), Some(_)) => ParamVector::new(s1, MatrixBlock::Diag(diag2)),
            // Centered 1-D family: Γ(x) = x².
            (MatrixBlock::Diag(_), None) => {
                ParamVector::new(zero.vector.clone(), MatrixBlock::Diag(DVector::from_element(1, s2[(0, 0)])))
            }
        })
    }
}

/// `(1/α) log((1/N) Σ wₗ)`.
pub fn renyi_bound_estimate(batch: &WeightedBatch, alpha: RenyiOrder) -> f64 {
    let lse = log_sum_exp(&batch.log_weights).unwrap_or(f64::NEG_INFINITY);
    (lse - (batch.len() as f64).ln()) / alpha.alpha()
}

/// Monte Carlo estimate of `∇f(θ) = q_θ(Γ) − π_θ^(α)(Γ)` from a batch drawn
/// at `θ`.
pub fn mc_gradient(fam: &ExponentialFamily, theta: &NaturalParams, batch: &WeightedBatch) -> Result<ParamVector> {
    Ok(fam.moments(theta)?.as_vector().sub(&batch.weighted_statistics(fam)?))
}

/// `F(θ) = f(θ) + r(θ)` with a closed-form `f`.
fn objective(
    fam: &ExponentialFamily,
    provider: &dyn GeometricAverage,
    reg: &Regularizer,
    alpha: RenyiOrder,
    theta: &NaturalParams,
) -> Result<f64> {
    let r = reg.evaluate(fam, theta)?;
    Ok(provider.divergence(fam, alpha, theta)? + r)
}

fn record(k: usize, theta: NaturalParams) -> IterationRecord {
    IterationRecord {
        k,
        theta,
        objective: None,
        renyi_bound: None,
        step_kl: None,
        ess: None,
        prox_active: false,
        repairs: 0,
    }
}

fn check_start(fam: &ExponentialFamily, theta0: &NaturalParams) -> Result<()> {
    fam.natural(theta0.as_vector().clone()).map(|_| ())
}

/// Exact proximal relaxed moment matching.
///
/// `provider` supplies `π_θ^(α)(Γ)` in closed form (in-family target) or by
/// quadrature (1-D). Requires `α ∈ (0, 1]` and `τk ∈ (0, 1]`.
pub fn prmm_exact(
    fam: &ExponentialFamily,
    provider: &dyn GeometricAverage,
    reg: &Regularizer,
    alpha: RenyiOrder,
    schedule: &Schedule,
    theta0: &NaturalParams,
) -> Result<RunTrace> {
    if alpha.alpha() > 1.0 {
        return Err(Error::InvalidInput(format!("exact PRMM needs α ∈ (0, 1], got {}", alpha.alpha())));
    }
    schedule.validate_prmm()?;
    reg.check_family(fam)?;
    check_start(fam, theta0)?;

    let mut records = Vec::with_capacity(schedule.max_iters + 1);
    let mut theta = theta0.clone();
    for k in 0..=schedule.max_iters {
        let mut rec = record(k, theta.clone());
        rec.objective = Some(objective(fam, provider, reg, alpha, &theta)?);
        if k == schedule.max_iters {
            records.push(rec);
            break;
        }
        let tau = schedule.tau.at(k);
        let target_moments = provider.geometric_moments(fam, alpha, &theta)?;
        let current = fam.moments(&theta)?;
        let half = fam.mean(ParamVector::lincomb(tau, target_moments.as_vector(), 1.0 - tau, current.as_vector()))?;
        let out = reg.prox_from_moments(fam, &half, tau)?;
        let step = kl_in_family(fam, &theta, &out.theta)?;
        rec.step_kl = Some(step);
        rec.prox_active = out.active;
        records.push(rec);
        if step <= schedule.stop_tol {
            return Ok(RunTrace { records, status: RunStatus::Converged });
        }
        theta = out.theta;
    }
    Ok(RunTrace { records, status: RunStatus::MaxIters })
}

/// Outcome of turning a moment estimate into mean parameters.
enum Repaired {
    Valid(MeanParams, usize),
    Failed(String),
}

/// Validates `eta` as mean parameters; if the implied covariance is not
/// positive definite, floors its eigenvalues at `REPAIR_FLOOR · λmax`.
fn repair_mean(fam: &ExponentialFamily, eta: ParamVector, strict: bool) -> Result<Repaired> {
    let raw = eta.clone();
    match fam.mean(eta) {
        Ok(m) => return Ok(Repaired::Valid(m, 0)),
        Err(Error::DualDomainViolation(msg)) if strict => {
            return Ok(Repaired::Failed(format!("moment estimate left dom A*: {msg}")));
        }
        Err(Error::DualDomainViolation(_)) => {}
        Err(e) => return Err(e),
    }
    if !raw.is_finite() {
        return Ok(Repaired::Failed("moment estimate is not finite".into()));
    }
    let loc = raw.vector.clone();
    let cov = match &raw.matrix {
        MatrixBlock::Sym(m2) => {
            let c = m2.sub(&SymMatrix::outer(&loc));
            let eig = sym_eigen(&c)?;
            let top = eig.max();
            if !(top > 0.0) {
                return Ok(Repaired::Failed("estimated covariance has no positive eigenvalue".into()));
            }
            let floor = REPAIR_FLOOR * top;
            Covariance::Full(eig.reconstruct_with(|l| l.max(floor)))
        }
        MatrixBlock::Diag(m2) => {
            let var: DVector<f64> = if loc.is_empty() {
                m2.clone()
            } else {
                DVector::from_iterator(m2.len(), m2.iter().zip(loc.iter()).map(|(s, m)| s - m * m))
            };
            let top = var.max();
            if !(top > 0.0) {
                return Ok(Repaired::Failed("estimated variances are all non-positive".into()));
            }
            let floor = REPAIR_FLOOR * top;
            Covariance::Diag(var.map(|v| v.max(floor)))
        }
    };
    match fam.mean_from_moment_form(&MomentForm { loc, cov }) {
        Ok(m) => Ok(Repaired::Valid(m, 1)),
        Err(e) => Ok(Repaired::Failed(format!("covariance repair failed: {e}"))),
    }
}

/// Monte Carlo proximal relaxed moment matching on a black-box target.
///
/// Accepts any `α > 0`. When the target carries in-family ground truth for
/// `fam`, records also hold the exact objective.
pub fn mc_prmm(
    fam: &ExponentialFamily,
    target: &Target,
    reg: &Regularizer,
    alpha: RenyiOrder,
    schedule: &Schedule,
    theta0: &NaturalParams,
    rng: &mut RngStream,
    options: McOptions,
) -> Result<RunTrace> {
    schedule.validate_prmm()?;
    schedule.validate_samples()?;
    reg.check_family(fam)?;
    check_start(fam, theta0)?;
    let exact = target.in_family(fam);

    let mut records = Vec::with_capacity(schedule.max_iters + 1);
    let mut theta = theta0.clone();
    for k in 0..=schedule.max_iters {
        let mut rec = record(k, theta.clone());
        if let Some(p) = &exact {
            rec.objective = objective(fam, p, reg, alpha, &theta).ok();
        }
        let batch = match WeightedBatch::draw(fam, target, alpha, &theta, schedule.n_samples.at(k), rng) {
            Ok(b) => b,
            Err(Error::OracleFailure(msg)) => {
                records.push(rec);
                return Ok(RunTrace { records, status: RunStatus::Diverged(msg) });
            }
            Err(e) => return Err(e),
        };
        rec.renyi_bound = Some(renyi_bound_estimate(&batch, alpha));
        rec.ess = Some(batch.ess);
        if k == schedule.max_iters {
            records.push(rec);
            break;
        }
        let tau = schedule.tau.at(k);
        let estimate = batch.weighted_statistics(fam)?;
        let current = fam.moments(&theta)?;
        let blended = ParamVector::lincomb(tau, &estimate, 1.0 - tau, current.as_vector());
        let half = match repair_mean(fam, blended, options.strict)? {
            Repaired::Valid(m, n) => {
                rec.repairs = n;
                m
            }
            Repaired::Failed(reason) => {
                records.push(rec);
                return Ok(RunTrace { records, status: RunStatus::Diverged(reason) });
            }
        };
        let out = reg.prox_from_moments(fam, &half, tau)?;
        let step = kl_in_family(fam, &theta, &out.theta)?;
        rec.step_kl = Some(step);
        rec.prox_active = out.active;
        records.push(rec);
        if step <= schedule.stop_tol {
            return Ok(RunTrace { records, status: RunStatus::Converged });
        }
        theta = out.theta;
    }
    Ok(RunTrace { records, status: RunStatus::MaxIters })
}

/// Variational Rényi bound ascent: a Euclidean gradient step in natural
/// parameters. A step that leaves Θ ends the run with `Diverged`.
pub fn vrb(
    fam: &ExponentialFamily,
    target: &Target,
    alpha: RenyiOrder,
    schedule: &Schedule,
    theta0: &NaturalParams,
    rng: &mut RngStream,
) -> Result<RunTrace> {
    schedule.validate_vrb()?;
    schedule.validate_samples()?;
    check_start(fam, theta0)?;
    let exact = target.in_family(fam);

    let mut records = Vec::with_capacity(schedule.max_iters + 1);
    let mut theta = theta0.clone();
    for k in 0..=schedule.max_iters {
        let mut rec = record(k, theta.clone());
        if let Some(p) = &exact {
            rec.objective = p.divergence(fam, alpha, &theta).ok();
        }
        let batch = match WeightedBatch::draw(fam, target, alpha, &theta, schedule.n_samples.at(k), rng) {
            Ok(b) => b,
            Err(Error::OracleFailure(msg)) => {
                records.push(rec);
                return Ok(RunTrace { records, status: RunStatus::Diverged(msg) });
            }
            Err(e) => return Err(e),
        };
        rec.renyi_bound = Some(renyi_bound_estimate(&batch, alpha));
        rec.ess = Some(batch.ess);
        if k == schedule.max_iters {
            records.push(rec);
            break;
        }
        let tau = schedule.tau.at(k);
        let grad = mc_gradient(fam, &theta, &batch)?;
        let next = ParamVector::lincomb(1.0, theta.as_vector(), -tau, &grad);
        let next = match fam.natural(next) {
            Ok(t) => t,
            Err(Error::DomainViolation(msg)) => {
                records.push(rec);
                return Ok(RunTrace {
                    records,
                    status: RunStatus::Diverged(format!("step left the natural domain: {msg}")),
                });
            }
            Err(e) => return Err(e),
        };
        let step = kl_in_family(fam, &theta, &next)?;
        rec.step_kl = Some(step);
        records.push(rec);
        if step <= schedule.stop_tol {
            return Ok(RunTrace { records, status: RunStatus::Converged });
        }
        theta = next;
    }
    Ok(RunTrace { records, status: RunStatus::MaxIters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::InFamilyTarget;
    use crate::targets::{make_gaussian_target, GaussianTargetSpec};

    fn start(fam: &ExponentialFamily) -> NaturalParams {
        let d = fam.dim();
        fam.from_mean_cov(&vec![5.0; d], &SymMatrix::identity(d).scaled(10.0)).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::constant(1.5, 10, 5).validate_prmm().is_err());
        assert!(Schedule::constant(1.5, 10, 5).validate_vrb().is_ok());
        assert!(Schedule::constant(0.0, 10, 5).validate_vrb().is_err());
        assert!(Schedule::constant(0.5, 1, 5).validate_samples().is_err());
        assert!(Schedule::constant(0.5, 10, 3).with_step_sizes(vec![0.5, 0.5]).validate_prmm().is_err());
        assert!(Schedule::constant(0.5, 10, 2).with_step_sizes(vec![0.5, 1.0]).validate_prmm().is_ok());
        assert!(Schedule::constant(0.5, 10, 2).with_stop_tol(-1.0).validate_prmm().is_err());
    }

    #[test]
    fn one_step_for_unit_order_and_step() {
        let fam = ExponentialFamily::full_gaussian(2);
        let target =
            fam.from_mean_cov(&[0.5, -0.5], &SymMatrix::from_row_slice(2, &[1.0, 0.3, 0.3, 2.0]).unwrap()).unwrap();
        let trace = prmm_exact(
            &fam,
            &InFamilyTarget::new(target.clone()),
            &Regularizer::Null,
            RenyiOrder::KL,
            &Schedule::constant(1.0, 0, 100),
            &start(&fam),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 2);
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.final_record().step_kl, Some(0.0));
        assert!(trace.final_theta().max_abs_diff(&target) < 1e-9);
    }

    #[test]
    fn fixed_point_start() {
        let fam = ExponentialFamily::full_gaussian(2);
        let tp = fam.from_mean_cov(&[0.1, 0.2], &SymMatrix::identity(2).scaled(2.0)).unwrap();
        let trace = prmm_exact(
            &fam,
            &InFamilyTarget::new(tp.clone()),
            &Regularizer::Null,
            RenyiOrder::new(0.5).unwrap(),
            &Schedule::constant(0.5, 0, 50).with_stop_tol(1e-24),
            &tp,
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.status, RunStatus::Converged);
        assert!(trace.records[0].objective.unwrap() < 1e-24);
    }

    #[test]
    fn exact_rejects_large_order() {
        let fam = ExponentialFamily::full_gaussian(1);
        let t = start(&fam);
        let r = prmm_exact(
            &fam,
            &InFamilyTarget::new(t.clone()),
            &Regularizer::Null,
            RenyiOrder::new(1.5).unwrap(),
            &Schedule::constant(0.5, 0, 5),
            &t,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn trace_lengths() {
        let fam = ExponentialFamily::full_gaussian(2);
        let target = make_gaussian_target(&GaussianTargetSpec::new(2, 5.0), &mut RngStream::new(1, 0)).unwrap();
        let provider = target.in_family(&fam).unwrap();
        let trace = prmm_exact(
            &fam,
            &provider,
            &Regularizer::Null,
            RenyiOrder::new(0.5).unwrap(),
            &Schedule::constant(0.5, 0, 7),
            &start(&fam),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 8);
        assert_eq!(trace.status, RunStatus::MaxIters);
        assert!(trace.final_record().step_kl.is_none());
        assert!(trace.records[..7].iter().all(|r| r.step_kl.unwrap() >= 0.0));

        let mc = mc_prmm(
            &fam,
            &target,
            &Regularizer::Null,
            RenyiOrder::new(0.5).unwrap(),
            &Schedule::constant(0.5, 200, 7),
            &start(&fam),
            &mut RngStream::new(2, 1),
            McOptions::default(),
        )
        .unwrap();
        assert_eq!(mc.records.len(), 8);
        assert!(mc.records.iter().all(|r| r.renyi_bound.is_some() && r.ess.is_some() && r.objective.is_some()));
    }

    #[test]
    fn batch_weights_normalize() {
        let fam = ExponentialFamily::full_gaussian(2);
        let target = make_gaussian_target(&GaussianTargetSpec::new(2, 3.0), &mut RngStream::new(4, 0)).unwrap();
        let batch = WeightedBatch::draw(
            &fam,
            &target,
            RenyiOrder::new(0.5).unwrap(),
            &start(&fam),
            300,
            &mut RngStream::new(1, 1),
        )
        .unwrap();
        let s: f64 = batch.normalized_weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(batch.ess >= 1.0 && batch.ess <= 300.0);
    }

    #[test]
    fn renyi_bound_simple_cases() {
        let xs = vec![DVector::zeros(1); 3];
        let b = WeightedBatch::from_log_weights(xs, vec![0.6; 3]).unwrap();
        assert!((renyi_bound_estimate(&b, RenyiOrder::new(0.5).unwrap()) - 1.2).abs() < 1e-14);
        let b1 = WeightedBatch::from_log_weights(vec![DVector::zeros(1)], vec![-2.0]).unwrap();
        assert!((renyi_bound_estimate(&b1, RenyiOrder::new(2.0).unwrap()) + 1.0).abs() < 1e-15);
        assert!(matches!(
            WeightedBatch::from_log_weights(vec![DVector::zeros(1)], vec![f64::NEG_INFINITY]),
            Err(Error::OracleFailure(_))
        ));
    }

    #[test]
    fn weighted_statistics_match_generic_definition() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let fams = [
            ExponentialFamily::full_gaussian(2),
            ExponentialFamily::diag_gaussian_with_frame(DMatrix::from_row_slice(2, 2, &[c, -c, c, c])).unwrap(),
        ];
        let mut rng = RngStream::new(5, 5);
        let xs: Vec<DVector<f64>> = (0..20).map(|_| rng.standard_normal_vec(2)).collect();
        let lw: Vec<f64> = (0..20).map(|_| rng.standard_normal()).collect();
        let batch = WeightedBatch::from_log_weights(xs.clone(), lw).unwrap();
        for fam in &fams {
            let mut acc = fam.zero_param();
            for (x, w) in xs.iter().zip(&batch.normalized_weights) {
                acc = ParamVector::lincomb(1.0, &acc, *w, &fam.sufficient_statistics(x.as_slice()).unwrap());
            }
            assert!(batch.weighted_statistics(fam).unwrap().max_abs_diff(&acc) < 1e-14);
        }
        let c1 = ExponentialFamily::centered_1d();
        let ys: Vec<DVector<f64>> = (0..10).map(|_| rng.standard_normal_vec(1)).collect();
        let b = WeightedBatch::from_log_weights(ys.clone(), vec![0.0; 10]).unwrap();
        let expected: f64 = ys.iter().map(|y| y[0] * y[0]).sum::<f64>() / 10.0;
        assert!((b.weighted_statistics(&c1).unwrap().matrix.as_diag().unwrap()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn repair_floors_covariance() {
        let fam = ExponentialFamily::full_gaussian(2);
        // m2 − m1 m1ᵀ = diag(1, −0.5).
        let eta = ParamVector::new(
            DVector::from_vec(vec![1.0, 0.0]),
            MatrixBlock::Sym(SymMatrix::from_diagonal(&[2.0, -0.5])),
        );
        let Repaired::Valid(m, n) = repair_mean(&fam, eta.clone(), false).unwrap() else { panic!() };
        assert_eq!(n, 1);
        let mf = fam.moment_form_from_mean(&m).unwrap();
        let Covariance::Full(c) = mf.cov else { panic!() };
        assert!((c.get(1, 1) - 1e-8).abs() < 1e-20);
        assert!(matches!(repair_mean(&fam, eta, true).unwrap(), Repaired::Failed(_)));
        let hopeless = ParamVector::new(
            DVector::from_vec(vec![1.0, 0.0]),
            MatrixBlock::Sym(SymMatrix::from_diagonal(&[0.5, -1.0])),
        );
        assert!(matches!(repair_mean(&fam, hopeless, false).unwrap(), Repaired::Failed(_)));
    }

    #[test]
    fn vrb_zero_gradient_keeps_theta() {
        // A batch whose weighted statistics equal the current moments.
        let fam = ExponentialFamily::centered_1d();
        let theta = fam
            .natural(ParamVector::new(DVector::zeros(0), MatrixBlock::Diag(DVector::from_element(1, -0.5))))
            .unwrap();
        let batch = WeightedBatch::from_log_weights(
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            vec![0.0, 0.0],
        )
        .unwrap();
        let g = mc_gradient(&fam, &theta, &batch).unwrap();
        assert!(g.norm() < 1e-15);
        let next = ParamVector::lincomb(1.0, theta.as_vector(), -0.3, &g);
        assert_eq!(&next, theta.as_vector());
    }

    #[test]
    fn vrb_divergence_is_recorded() {
        let fam = ExponentialFamily::full_gaussian(2);
        let target = make_gaussian_target(&GaussianTargetSpec::new(2, 10.0), &mut RngStream::new(3, 0)).unwrap();
        let trace = vrb(
            &fam,
            &target,
            RenyiOrder::new(0.5).unwrap(),
            &Schedule::constant(1000.0, 100, 50),
            &fam.from_mean_cov(&[0.0, 0.0], &SymMatrix::identity(2).scaled(0.01)).unwrap(),
            &mut RngStream::new(3, 1),
        )
        .unwrap();
        assert!(matches!(trace.status, RunStatus::Diverged(_)));
        assert!(trace.records.len() <= 51);
    }
}
