//! Divergences between family members, the geometric average `π_θ^(α)`,
//! the gradient of `f(θ) = RD_α(π, q_θ)`, and a 1-D quadrature oracle.
//!
//! KL and Rényi divergences are computed from the spectrum of the covariance
//! of one argument whitened by the other, which keeps full relative accuracy
//! as the two members approach each other. The textbook forms in terms of
//! `A` ([`bregman_divergence`], [`renyi_jensen_gap`]) are kept for cross-checks;
//! they lose everything below roughly `1e-16 · |A|`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expfam::{Covariance, ExponentialFamily, MeanParams, MomentForm, NaturalParams, ParamVector};
use crate::numerics::{cholesky, log_sum_exp, sym_eigen, SymMatrix};

/// Order `α > 0` of a Rényi divergence. `α = 1` is the KL divergence and is
/// dispatched exactly.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub const KL: RenyiOrder = RenyiOrder(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidInput(format!("Rényi order must be positive, got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    pub fn is_kl(self) -> bool {
        self.0 == 1.0
    }
}

/// Whitened spectrum of `p` relative to `q`: eigenvalues `λ` of
/// `L_q⁻¹ Σ_p L_q⁻ᵀ` and the mean offset `y = Uᵀ L_q⁻¹ (μ_p − μ_q)` in the
/// same eigenbasis.
fn whitened_spectrum(p: &MomentForm, q: &MomentForm) -> Result<(Vec<f64>, Vec<f64>)> {
    match (&p.cov, &q.cov) {
        (Covariance::Full(sp), Covariance::Full(sq)) => {
            let lq = cholesky(sq)?;
            let x = lq.solve_lower_matrix(sp.as_matrix());
            let m = SymMatrix::new(lq.solve_lower_matrix(&x.transpose()))?;
            let eig = sym_eigen(&m)?;
            let z = lq.solve_lower(&(&p.loc - &q.loc));
            let y = eig.basis.transpose() * z;
            Ok((eig.eigenvalues.iter().copied().collect(), y.iter().copied().collect()))
        }
        (Covariance::Diag(vp), Covariance::Diag(vq)) => {
            let lambda = vp.iter().zip(vq.iter()).map(|(a, b)| a / b).collect();
            let y = if p.loc.is_empty() {
                vec![0.0; vp.len()]
            } else {
                p.loc.iter().zip(q.loc.iter()).zip(vq.iter()).map(|((a, b), v)| (a - b) / v.sqrt()).collect()
            };
            Ok((lambda, y))
        }
        _ => Err(Error::InvalidInput("parameters belong to different families".into())),
    }
}

const SERIES_CUTOFF: f64 = 1e-2;

/// `δ − log(1 + δ)`.
fn kl_term(delta: f64) -> f64 {
    if delta.abs() < SERIES_CUTOFF {
        let mut acc = 0.0;
        let mut pow = delta;
        for n in 2..=24 {
            pow *= delta;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * pow / n as f64;
        }
        acc
    } else {
        delta - delta.ln_1p()
    }
}

/// `(log(1 + βδ) − β log(1 + δ)) / β` for `β = 1 − α ≠ 0`.
fn renyi_term(delta: f64, beta: f64) -> f64 {
    if delta.abs() < SERIES_CUTOFF {
        let mut acc = 0.0;
        let mut pow = delta;
        let mut beta_pow = 1.0;
        for n in 2..=24 {
            pow *= delta;
            beta_pow *= beta;
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            acc += sign * (beta_pow - 1.0) * pow / n as f64;
        }
        acc
    } else {
        ((beta * delta).ln_1p() - beta * delta.ln_1p()) / beta
    }
}

/// `KL(q_{θa}, q_{θb}) = d_A(θb, θa)`.
pub fn kl_in_family(fam: &ExponentialFamily, theta_a: &NaturalParams, theta_b: &NaturalParams) -> Result<f64> {
    if theta_a == theta_b {
        return Ok(0.0);
    }
    let (lambda, y) = whitened_spectrum(&fam.moment_form(theta_a)?, &fam.moment_form(theta_b)?)?;
    let trace_part: f64 = lambda.iter().map(|l| kl_term(l - 1.0)).sum();
    let mean_part: f64 = y.iter().map(|v| v * v).sum();
    Ok((0.5 * (trace_part + mean_part)).max(0.0))
}

/// `RD_α(π, q_θ)` for an in-family target `π = q_{θπ}`.
///
/// For `α > 1` the blend `αθπ + (1 − α)θ` must lie in Θ, otherwise the
/// divergence is infinite and `DomainViolation` is returned.
pub fn renyi_in_family(
    fam: &ExponentialFamily,
    alpha: RenyiOrder,
    theta_pi: &NaturalParams,
    theta: &NaturalParams,
) -> Result<f64> {
    if alpha.is_kl() {
        return kl_in_family(fam, theta_pi, theta);
    }
    if theta_pi == theta {
        return Ok(0.0);
    }
    let a = alpha.alpha();
    let beta = 1.0 - a;
    let (lambda, y) = whitened_spectrum(&fam.moment_form(theta_pi)?, &fam.moment_form(theta)?)?;
    let mut total = 0.0;
    for (l, yi) in lambda.iter().zip(y.iter()) {
        let denom = a + beta * l;
        if !(denom > 0.0) {
            return Err(Error::DomainViolation(format!("blend αθπ + (1 − α)θ leaves the domain for α = {a}")));
        }
        total += 0.5 * a * yi * yi / denom + 0.5 * renyi_term(l - 1.0, beta);
    }
    Ok(total.max(0.0))
}

/// `d_A(θ, θ') = A(θ) − A(θ') − ⟨∇A(θ'), θ − θ'⟩`, evaluated literally.
pub fn bregman_divergence(fam: &ExponentialFamily, theta: &NaturalParams, theta_prime: &NaturalParams) -> Result<f64> {
    let grad = fam.moments(theta_prime)?;
    let diff = theta.as_vector().sub(theta_prime.as_vector());
    Ok(fam.log_partition(theta)? - fam.log_partition(theta_prime)? - grad.as_vector().dot(&diff))
}

/// `(αA(θπ) + (1 − α)A(θ) − A(αθπ + (1 − α)θ)) / (1 − α)`, evaluated literally.
pub fn renyi_jensen_gap(
    fam: &ExponentialFamily,
    alpha: RenyiOrder,
    theta_pi: &NaturalParams,
    theta: &NaturalParams,
) -> Result<f64> {
    if alpha.is_kl() {
        return bregman_divergence(fam, theta, theta_pi);
    }
    let a = alpha.alpha();
    let blend = geometric_average_in_family(fam, a, theta_pi, theta)?;
    Ok((a * fam.log_partition(theta_pi)? + (1.0 - a) * fam.log_partition(theta)? - fam.log_partition(&blend)?)
        / (1.0 - a))
}

/// `αθπ + (1 − α)θ`, the natural parameter of `π_θ^(α)` for an in-family
/// target. `alpha = 0` returns `θ`.
pub fn geometric_average_in_family(
    fam: &ExponentialFamily,
    alpha: f64,
    theta_pi: &NaturalParams,
    theta: &NaturalParams,
) -> Result<NaturalParams> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("blend weight must be non-negative, got {alpha}")));
    }
    let p = ParamVector::lincomb(alpha, theta_pi.as_vector(), 1.0 - alpha, theta.as_vector());
    fam.natural(p).map_err(|e| match e {
        Error::DomainViolation(_) => {
            Error::DomainViolation(format!("geometric average leaves the domain for α = {alpha}"))
        }
        other => other,
    })
}

/// Supplies the moments of the geometric average `π_θ^(α) ∝ π^α q_θ^{1−α}`
/// and, where available, the objective `f(θ) = RD_α(π, q_θ)`.
pub trait GeometricAverage: Sync {
    fn geometric_moments(
        &self,
        fam: &ExponentialFamily,
        alpha: RenyiOrder,
        theta: &NaturalParams,
    ) -> Result<MeanParams>;

    fn divergence(&self, fam: &ExponentialFamily, alpha: RenyiOrder, theta: &NaturalParams) -> Result<f64>;
}

/// A target that is itself a member `q_{θπ}` of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct InFamilyTarget {
    pub theta_pi: NaturalParams,
}

impl InFamilyTarget {
    pub fn new(theta_pi: NaturalParams) -> Self {
        Self { theta_pi }
    }
}

impl GeometricAverage for InFamilyTarget {
    fn geometric_moments(
        &self,
        fam: &ExponentialFamily,
        alpha: RenyiOrder,
        theta: &NaturalParams,
    ) -> Result<MeanParams> {
        fam.moments(&geometric_average_in_family(fam, alpha.alpha(), &self.theta_pi, theta)?)
    }

    fn divergence(&self, fam: &ExponentialFamily, alpha: RenyiOrder, theta: &NaturalParams) -> Result<f64> {
        renyi_in_family(fam, alpha, &self.theta_pi, theta)
    }
}

/// Composite Simpson grid on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
}

impl QuadratureGrid {
    pub const DEFAULT_POINTS: usize = 20001;

    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!("invalid quadrature bounds [{lower}, {upper}]")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidInput(format!("Simpson rule needs an odd point count ≥ 3, got {n_points}")));
        }
        Ok(Self { lower, upper, n_points })
    }

    /// Union of `μ ± 12σ` over the given (mean, standard deviation) pairs.
    pub fn covering(components: &[(f64, f64)]) -> Result<Self> {
        let lower = components.iter().map(|(m, s)| m - 12.0 * s).fold(f64::INFINITY, f64::min);
        let upper = components.iter().map(|(m, s)| m + 12.0 * s).fold(f64::NEG_INFINITY, f64::max);
        Self::new(lower, upper, Self::DEFAULT_POINTS)
    }

    pub fn union(&self, other: &QuadratureGrid) -> Result<Self> {
        Self::new(self.lower.min(other.lower), self.upper.max(other.upper), self.n_points.max(other.n_points))
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.n_points).map(move |i| self.lower + i as f64 * h)
    }

    fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.n_points - 1) as f64
    }

    /// Logarithms of the Simpson weights, aligned with [`nodes`](Self::nodes).
    pub fn log_weights(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n_points)
            .map(|i| {
                let c = if i == 0 || i == self.n_points - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (c * h / 3.0).ln()
            })
            .collect()
    }

    /// `∫ f` by Simpson's rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes().zip(self.log_weights()).map(|(x, lw)| lw.exp() * f(x)).sum()
    }
}

fn check_finite(v: f64, what: &str, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OracleFailure(format!("{what} is not finite at x = {x}")))
    }
}

/// `RD_α(p, q)` for 1-D densities by Simpson quadrature in log space.
pub fn quadrature_renyi(
    p_logpdf: &dyn Fn(f64) -> f64,
    q_logpdf: &dyn Fn(f64) -> f64,
    alpha: RenyiOrder,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let lw = grid.log_weights();
    if alpha.is_kl() {
        let mut total = 0.0;
        for (x, w) in grid.nodes().zip(lw) {
            let lp = check_finite(p_logpdf(x), "log p", x)?;
            let lq = check_finite(q_logpdf(x), "log q", x)?;
            total += (lp - lq) * (lp + w).exp();
        }
        return Ok(total);
    }
    let a = alpha.alpha();
    let mut terms = Vec::with_capacity(grid.n_points);
    for (x, w) in grid.nodes().zip(lw) {
        let lp = check_finite(p_logpdf(x), "log p", x)?;
        let lq = check_finite(q_logpdf(x), "log q", x)?;
        terms.push(a * lp + (1.0 - a) * lq + w);
    }
    Ok(log_sum_exp(&terms)? / (a - 1.0))
}

/// A 1-D black-box target `log π̃` handled by quadrature. Supports the
/// one-dimensional families.
#[derive(Clone)]
pub struct QuadratureTarget {
    log_density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    grid: QuadratureGrid,
}

impl std::fmt::Debug for QuadratureTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadratureTarget").field("grid", &self.grid).finish_non_exhaustive()
    }
}

impl QuadratureTarget {
    /// `grid` must cover the bulk of `π`; it is widened per call to cover
    /// `q_θ` as well.
    pub fn new(log_density: impl Fn(f64) -> f64 + Send + Sync + 'static, grid: QuadratureGrid) -> Self {
        Self { log_density: Arc::new(log_density), grid }
    }

    fn grid_for(&self, fam: &ExponentialFamily, theta: &NaturalParams) -> Result<QuadratureGrid> {
        if fam.dim() != 1 {
            return Err(Error::InvalidInput("quadrature targets are one-dimensional".into()));
        }
        let (mu, cov) = fam.mean_cov(theta)?;
        self.grid.union(&QuadratureGrid::covering(&[(mu[0], cov.get(0, 0).sqrt())])?)
    }

    /// `log Z` of the target on the widened grid.
    fn log_normalizer(&self, grid: &QuadratureGrid) -> Result<f64> {
        let mut terms = Vec::with_capacity(grid.n_points);
        for (x, w) in grid.nodes().zip(grid.log_weights()) {
            terms.push(check_finite((self.log_density)(x), "log π̃", x)? + w);
        }
        log_sum_exp(&terms)
    }
}

impl GeometricAverage for QuadratureTarget {
    fn geometric_moments(
        &self,
        fam: &ExponentialFamily,
        alpha: RenyiOrder,
        theta: &NaturalParams,
    ) -> Result<MeanParams> {
        let grid = self.grid_for(fam, theta)?;
        let a = alpha.alpha();
        let a_q = fam.log_partition(theta)?;
        let mut log_terms = Vec::with_capacity(grid.n_points);
        let mut stats = Vec::with_capacity(grid.n_points);
        for (x, w) in grid.nodes().zip(grid.log_weights()) {
            let g = fam.sufficient_statistics(&[x])?;
            let lq = theta.as_vector().dot(&g) - a_q;
            let lp = check_finite((self.log_density)(x), "log π̃", x)?;
            log_terms.push(a * lp + (1.0 - a) * lq + w);
            stats.push(g);
        }
        let lse = log_sum_exp(&log_terms)?;
        if !lse.is_finite() {
            return Err(Error::OracleFailure("geometric average has zero mass on the grid".into()));
        }
        let mut acc = fam.zero_param();
        for (lt, g) in log_terms.iter().zip(stats.iter()) {
            acc = ParamVector::lincomb(1.0, &acc, (lt - lse).exp(), g);
        }
        fam.mean(acc)
            .map_err(|e| Error::OracleFailure(format!("quadrature moments are not valid mean parameters: {e}")))
    }

    fn divergence(&self, fam: &ExponentialFamily, alpha: RenyiOrder, theta: &NaturalParams) -> Result<f64> {
        let grid = self.grid_for(fam, theta)?;
        let log_z = self.log_normalizer(&grid)?;
        let log_p = |x: f64| (self.log_density)(x) - log_z;
        let log_q = |x: f64| fam.log_density(theta, &[x]).unwrap_or(f64::NAN);
        quadrature_renyi(&log_p, &log_q, alpha, &grid)
    }
}

/// `∇f(θ) = q_θ(Γ) − π_θ^(α)(Γ)`.
pub fn grad_f(
    fam: &ExponentialFamily,
    alpha: RenyiOrder,
    provider: &dyn GeometricAverage,
    theta: &NaturalParams,
) -> Result<ParamVector> {
    let q = fam.moments(theta)?;
    let g = provider.geometric_moments(fam, alpha, theta)?;
    Ok(q.as_vector().sub(g.as_vector()))
}

/// Second derivative of `f(θ) = RD_α(π, q_θ)` for the centered 1-D family
/// with in-family target `θπ`:
/// `1/(2θ²) + (α − 1)/(2((α − 1)θ − αθπ)²)`.
pub fn hessian_f_1d(alpha: RenyiOrder, theta_pi: f64, theta: f64) -> Result<f64> {
    if !(theta < 0.0 && theta_pi < 0.0) {
        return Err(Error::DomainViolation("centered 1-D parameters must be negative".into()));
    }
    let a = alpha.alpha();
    let blend = a * theta_pi + (1.0 - a) * theta;
    if !(blend < 0.0) {
        return Err(Error::DomainViolation(format!("θ is outside the domain of f for α = {a}")));
    }
    Ok(0.5 / (theta * theta) + (a - 1.0) / (2.0 * blend * blend))
}

/// Moment-space coordinates used by finite-difference checks: the flat
/// coordinates of `theta` perturbed along coordinate `i`.
pub fn perturb(fam: &ExponentialFamily, theta: &NaturalParams, i: usize, h: f64) -> Result<NaturalParams> {
    let mut flat = theta.as_vector().to_flat();
    flat[i] += h;
    fam.natural(unflatten(fam, theta.as_vector(), &flat))
}

/// Inverse of [`ParamVector::to_flat`] for the layout of `like`. Dense
/// matrix blocks are re-symmetrized.
pub fn unflatten(fam: &ExponentialFamily, like: &ParamVector, flat: &[f64]) -> ParamVector {
    let _ = fam;
    let p = like.vector.len();
    let vector = DVector::from_column_slice(&flat[..p]);
    let matrix = match &like.matrix {
        crate::expfam::MatrixBlock::Sym(m) => {
            let d = m.dim();
            crate::expfam::MatrixBlock::Sym(SymMatrix::from_row_slice(d, &flat[p..p + d * d]).expect("layout matches"))
        }
        crate::expfam::MatrixBlock::Diag(v) => {
            crate::expfam::MatrixBlock::Diag(DVector::from_column_slice(&flat[p..p + v.len()]))
        }
    };
    ParamVector::new(vector, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::MatrixBlock;
    use crate::numerics::RngStream;
    use approx::assert_abs_diff_eq;

    fn n1(mu: f64, var: f64) -> NaturalParams {
        ExponentialFamily::full_gaussian(1).from_mean_cov(&[mu], &SymMatrix::from_diagonal(&[var])).unwrap()
    }

    fn centered(theta: f64) -> NaturalParams {
        ExponentialFamily::centered_1d()
            .natural(ParamVector::new(DVector::zeros(0), MatrixBlock::Diag(DVector::from_element(1, theta))))
            .unwrap()
    }

    fn gauss_logpdf(mu: f64, var: f64) -> impl Fn(f64) -> f64 {
        move |x| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (x - mu).powi(2) / var
    }

    fn random_full(d: usize, rng: &mut RngStream) -> NaturalParams {
        let fam = ExponentialFamily::full_gaussian(d);
        let a = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
        let cov = SymMatrix::new(&a * a.transpose() / d as f64 + nalgebra::DMatrix::identity(d, d) * 0.3).unwrap();
        let mu: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        fam.from_mean_cov(&mu, &cov).unwrap()
    }

    #[test]
    fn kl_examples() {
        let fam = ExponentialFamily::full_gaussian(1);
        assert_eq!(kl_in_family(&fam, &n1(0.3, 2.0), &n1(0.3, 2.0)).unwrap(), 0.0);
        let expected = 0.5 * (0.5 + 2f64.ln() - 1.0);
        assert_abs_diff_eq!(kl_in_family(&fam, &n1(0.0, 1.0), &n1(0.0, 2.0)).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_in_family(&fam, &n1(1.0, 1.0), &n1(0.0, 1.0)).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_matches_quadrature() {
        let grid = QuadratureGrid::covering(&[(0.0, 1.0), (0.0, 2f64.sqrt())]).unwrap();
        let q = quadrature_renyi(&gauss_logpdf(0.0, 1.0), &gauss_logpdf(0.0, 2.0), RenyiOrder::KL, &grid).unwrap();
        assert_abs_diff_eq!(q, 0.5 * (0.5 + 2f64.ln() - 1.0), epsilon = 1e-7);
        let grid = QuadratureGrid::covering(&[(1.0, 1.0), (0.0, 1.0)]).unwrap();
        let q = quadrature_renyi(&gauss_logpdf(1.0, 1.0), &gauss_logpdf(0.0, 1.0), RenyiOrder::KL, &grid).unwrap();
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-7);
    }

    #[test]
    fn quadrature_identical_densities() {
        let grid = QuadratureGrid::covering(&[(0.5, 1.5)]).unwrap();
        for a in [0.5, 1.0, 2.0] {
            let v = quadrature_renyi(
                &gauss_logpdf(0.5, 2.25),
                &gauss_logpdf(0.5, 2.25),
                RenyiOrder::new(a).unwrap(),
                &grid,
            )
            .unwrap();
            assert!(v.abs() < 1e-10, "α = {a}: {v}");
        }
    }

    #[test]
    fn quadrature_rejects_non_finite() {
        let grid = QuadratureGrid::new(-1.0, 1.0, 101).unwrap();
        let bad = |x: f64| if x > 0.5 { f64::NAN } else { 0.0 };
        assert!(matches!(
            quadrature_renyi(&bad, &gauss_logpdf(0.0, 1.0), RenyiOrder::new(0.5).unwrap(), &grid),
            Err(Error::OracleFailure(_))
        ));
        assert!(QuadratureGrid::new(0.0, 1.0, 100).is_err());
        assert!(QuadratureGrid::new(1.0, 0.0, 101).is_err());
    }

    #[test]
    fn renyi_matches_quadrature_half() {
        let fam = ExponentialFamily::full_gaussian(1);
        let closed = renyi_in_family(&fam, RenyiOrder::new(0.5).unwrap(), &n1(0.0, 1.0), &n1(1.0, 1.0)).unwrap();
        let grid = QuadratureGrid::covering(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let quad =
            quadrature_renyi(&gauss_logpdf(0.0, 1.0), &gauss_logpdf(1.0, 1.0), RenyiOrder::new(0.5).unwrap(), &grid)
                .unwrap();
        assert_abs_diff_eq!(closed, quad, epsilon = 1e-7);
        // α (Δμ)² / 2 for equal variances.
        assert_abs_diff_eq!(closed, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn renyi_centered_matches_quadrature() {
        let c = ExponentialFamily::centered_1d();
        let alpha = RenyiOrder::new(0.5).unwrap();
        let closed = renyi_in_family(&c, alpha, &centered(-0.5), &centered(-0.25)).unwrap();
        let grid = QuadratureGrid::covering(&[(0.0, 1.0), (0.0, 2f64.sqrt())]).unwrap();
        let quad = quadrature_renyi(&gauss_logpdf(0.0, 1.0), &gauss_logpdf(0.0, 2.0), alpha, &grid).unwrap();
        assert!((closed - quad).abs() < 1e-6);
        assert_eq!(renyi_in_family(&c, alpha, &centered(-0.5), &centered(-0.5)).unwrap(), 0.0);
    }

    #[test]
    fn renyi_continuity_at_one() {
        let fam = ExponentialFamily::full_gaussian(2);
        let mut rng = RngStream::new(3, 0);
        for _ in 0..20 {
            let a = random_full(2, &mut rng);
            let b = random_full(2, &mut rng);
            let kl = renyi_in_family(&fam, RenyiOrder::KL, &a, &b).unwrap();
            let r = renyi_in_family(&fam, RenyiOrder::new(1.0 - 1e-4).unwrap(), &a, &b).unwrap();
            assert!((r - kl).abs() <= 1e-3 * kl, "{r} vs {kl}");
        }
        let fam1 = ExponentialFamily::full_gaussian(1);
        let kl = renyi_in_family(&fam1, RenyiOrder::KL, &n1(0.0, 1.0), &n1(0.0, 2.0)).unwrap();
        let r = renyi_in_family(&fam1, RenyiOrder::new(0.999).unwrap(), &n1(0.0, 1.0), &n1(0.0, 2.0)).unwrap();
        assert!((r - kl).abs() <= 1e-3 * kl);
    }

    #[test]
    fn closed_forms_agree_with_log_partition_forms() {
        let mut rng = RngStream::new(11, 0);
        for d in [1, 3, 6] {
            let fam = ExponentialFamily::full_gaussian(d);
            for _ in 0..30 {
                let a = random_full(d, &mut rng);
                let b = random_full(d, &mut rng);
                let kl = kl_in_family(&fam, &a, &b).unwrap();
                let bd = bregman_divergence(&fam, &b, &a).unwrap();
                assert!((kl - bd).abs() <= 1e-9 * (1.0 + kl), "{kl} vs {bd}");
                for alpha in [0.25, 0.5, 0.75, 1.5] {
                    let order = RenyiOrder::new(alpha).unwrap();
                    match renyi_in_family(&fam, order, &a, &b) {
                        Ok(r) => {
                            let g = renyi_jensen_gap(&fam, order, &a, &b).unwrap();
                            assert!((r - g).abs() <= 1e-9 * (1.0 + r), "α = {alpha}: {r} vs {g}");
                        }
                        Err(Error::DomainViolation(_)) => {
                            assert!(alpha > 1.0);
                            assert!(renyi_jensen_gap(&fam, order, &a, &b).is_err());
                        }
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn small_divergences_keep_relative_accuracy() {
        let fam = ExponentialFamily::full_gaussian(1);
        let h = 1e-7;
        let kl = kl_in_family(&fam, &n1(h, 1.0), &n1(0.0, 1.0)).unwrap();
        assert!((kl - 0.5 * h * h).abs() <= 1e-9 * 0.5 * h * h);
        let alpha = RenyiOrder::new(0.5).unwrap();
        let r = renyi_in_family(&fam, alpha, &n1(0.0, 1.0 + h), &n1(0.0, 1.0)).unwrap();
        // α/4 · δ² to leading order.
        assert!((r - 0.125 * h * h).abs() <= 1e-6 * 0.125 * h * h, "{r}");
    }

    #[test]
    fn diag_family_matches_full() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let q = nalgebra::DMatrix::from_row_slice(2, 2, &[c, -c, c, c]);
        let diag = ExponentialFamily::diag_gaussian_with_frame(q.clone()).unwrap();
        let full = ExponentialFamily::full_gaussian(2);
        let ca = SymMatrix::from_diagonal(&[2.0, 0.5]).congruence(&q);
        let cb = SymMatrix::from_diagonal(&[0.7, 1.3]).congruence(&q);
        let (da, db) = (diag.from_mean_cov(&[1.0, 0.0], &ca).unwrap(), diag.from_mean_cov(&[0.0, -1.0], &cb).unwrap());
        let (fa, fb) = (full.from_mean_cov(&[1.0, 0.0], &ca).unwrap(), full.from_mean_cov(&[0.0, -1.0], &cb).unwrap());
        for alpha in [0.5, 1.0, 1.5] {
            let o = RenyiOrder::new(alpha).unwrap();
            assert_abs_diff_eq!(
                renyi_in_family(&diag, o, &da, &db).unwrap(),
                renyi_in_family(&full, o, &fa, &fb).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn geometric_average_examples() {
        let c = ExponentialFamily::centered_1d();
        let (tp, t) = (centered(-0.5), centered(-1.0));
        assert_eq!(geometric_average_in_family(&c, 1.0, &tp, &t).unwrap(), tp);
        assert_eq!(geometric_average_in_family(&c, 0.0, &tp, &t).unwrap(), t);
        let g = geometric_average_in_family(&c, 0.5, &tp, &t).unwrap();
        assert_eq!(g.theta2().as_diag().unwrap()[0], -0.75);
        // α = 3 blend: 3·(−0.5) − 2·(−1) = 0.5 > 0.
        assert!(matches!(geometric_average_in_family(&c, 3.0, &tp, &t), Err(Error::DomainViolation(_))));
        assert!(matches!(renyi_in_family(&c, RenyiOrder::new(3.0).unwrap(), &tp, &t), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn grad_vanishes_at_target() {
        let fam = ExponentialFamily::full_gaussian(2);
        let mut rng = RngStream::new(2, 0);
        let tp = random_full(2, &mut rng);
        let target = InFamilyTarget::new(tp.clone());
        for alpha in [0.5, 1.0, 2.0] {
            let g = grad_f(&fam, RenyiOrder::new(alpha).unwrap(), &target, &tp).unwrap();
            assert!(g.norm() < 1e-12);
        }
        let t = random_full(2, &mut rng);
        let g = grad_f(&fam, RenyiOrder::KL, &target, &t).unwrap();
        let expect = fam.moments(&t).unwrap().as_vector().sub(fam.moments(&tp).unwrap().as_vector());
        assert!(g.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences_centered() {
        let c = ExponentialFamily::centered_1d();
        let mut rng = RngStream::new(8, 0);
        let alpha = RenyiOrder::new(0.5).unwrap();
        for _ in 0..50 {
            let tp = centered(-rng.uniform_range(0.2, 2.0));
            let t = centered(-rng.uniform_range(0.2, 2.0));
            let target = InFamilyTarget::new(tp.clone());
            let g = grad_f(&c, alpha, &target, &t).unwrap().matrix.as_diag().unwrap()[0];
            let h = 1e-5;
            let fp = renyi_in_family(&c, alpha, &tp, &perturb(&c, &t, 0, h).unwrap()).unwrap();
            let fm = renyi_in_family(&c, alpha, &tp, &perturb(&c, &t, 0, -h).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((g - fd).abs() <= 1e-4 * g.abs().max(1e-8), "{g} vs {fd}");
        }
    }

    #[test]
    fn hessian_examples() {
        assert_abs_diff_eq!(hessian_f_1d(RenyiOrder::KL, -0.5, -0.5).unwrap(), 2.0);
        assert_abs_diff_eq!(hessian_f_1d(RenyiOrder::new(0.5).unwrap(), -0.5, -0.5).unwrap(), 1.0);
        let mut last = 0.0;
        for k in 1..=6 {
            let v = hessian_f_1d(RenyiOrder::KL, -0.5, -(10f64.powi(-k))).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(hessian_f_1d(RenyiOrder::KL, -0.5, 0.1).is_err());
    }

    #[test]
    fn hessian_matches_second_differences() {
        let c = ExponentialFamily::centered_1d();
        for (alpha, tp, t) in [(0.5, -0.5, -0.5), (0.25, -1.0, -0.3), (1.5, -0.5, -0.8), (2.0, -1.0, -1.2)] {
            let o = RenyiOrder::new(alpha).unwrap();
            let f = |x: f64| renyi_in_family(&c, o, &centered(tp), &centered(x)).unwrap();
            let h = 1e-4;
            let fd = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
            let exact = hessian_f_1d(o, tp, t).unwrap();
            assert!((fd - exact).abs() < 1e-5 * exact.abs().max(1.0), "α = {alpha}: {fd} vs {exact}");
        }
    }

    #[test]
    fn quadrature_target_matches_in_family() {
        let fam = ExponentialFamily::full_gaussian(1);
        let tp = n1(0.7, 1.8);
        let lp = gauss_logpdf(0.7, 1.8);
        let grid = QuadratureGrid::covering(&[(0.7, 1.8f64.sqrt())]).unwrap();
        let quad = QuadratureTarget::new(move |x| lp(x) + 3.0, grid);
        let exact = InFamilyTarget::new(tp);
        let t = n1(-1.0, 0.6);
        for alpha in [0.5, 1.0, 1.2] {
            let o = RenyiOrder::new(alpha).unwrap();
            let a = quad.geometric_moments(&fam, o, &t).unwrap();
            let b = exact.geometric_moments(&fam, o, &t).unwrap();
            assert!(a.as_vector().max_abs_diff(b.as_vector()) < 1e-9, "{:?} vs {:?}", a, b);
            let da = quad.divergence(&fam, o, &t).unwrap();
            let db = exact.divergence(&fam, o, &t).unwrap();
            assert!((da - db).abs() < 1e-7, "α = {alpha}: {da} vs {db}");
        }
    }
}
