//! Black-box targets given by an unnormalized log-density `log π̃`.
//!
//! Two generators are provided: Gaussian targets with a prescribed condition
//! number, and the posterior of a sigmoid regression model on synthetic
//! spike-and-slab data.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::divergences::InFamilyTarget;
use crate::error::{Error, Result};
use crate::expfam::{ExponentialFamily, FamilyKind, NaturalParams};
use crate::numerics::{RngStream, SymMatrix};

pub type LogDensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Known truth attached to a target, used for metrics and exact objectives.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Gaussian {
        mu_bar: DVector<f64>,
        sigma_bar: SymMatrix,
        /// `π` as a member of the full-covariance family.
        theta_pi: NaturalParams,
    },
    Regression {
        beta_bar: DVector<f64>,
    },
}

#[derive(Clone)]
pub struct Target {
    log_density: LogDensityFn,
    dim: usize,
    ground_truth: Option<GroundTruth>,
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Target")
            .field("dim", &self.dim)
            .field("ground_truth", &self.ground_truth)
            .finish_non_exhaustive()
    }
}

impl Target {
    pub fn new(dim: usize, log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { log_density: Arc::new(log_density), dim, ground_truth: None }
    }

    pub fn with_ground_truth(mut self, truth: GroundTruth) -> Self {
        self.ground_truth = Some(truth);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_unnormalized(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// The same target with `log π̃` shifted by `c`.
    pub fn shifted(&self, c: f64) -> Target {
        let inner = self.log_density.clone();
        Target { log_density: Arc::new(move |x| inner(x) + c), dim: self.dim, ground_truth: self.ground_truth.clone() }
    }

    /// Closed-form geometric averages, when `π` is a member of `fam`.
    pub fn in_family(&self, fam: &ExponentialFamily) -> Option<InFamilyTarget> {
        match (&self.ground_truth, fam.kind()) {
            (Some(GroundTruth::Gaussian { theta_pi, .. }), FamilyKind::FullGaussian) if fam.dim() == self.dim => {
                Some(InFamilyTarget::new(theta_pi.clone()))
            }
            _ => None,
        }
    }
}

/// Gaussian target with mean in `[−w, w]^d` and covariance of condition
/// number `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTargetSpec {
    pub d: usize,
    pub kappa: f64,
    #[serde(default = "default_mean_box")]
    pub mean_box: f64,
}

fn default_mean_box() -> f64 {
    0.5
}

impl GaussianTargetSpec {
    pub fn new(d: usize, kappa: f64) -> Self {
        Self { d, kappa, mean_box: 0.5 }
    }
}

/// `π̃(x) = exp(−½ (x − μ̄)ᵀ Σ̄⁻¹ (x − μ̄))` with `Σ̄ = U diag(λ) Uᵀ`, `U`
/// Haar-distributed and `λᵢ = κ^{i/(d−1) − ½}`.
pub fn make_gaussian_target(spec: &GaussianTargetSpec, rng: &mut RngStream) -> Result<Target> {
    let d = spec.d;
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if !(spec.kappa >= 1.0 && spec.kappa.is_finite()) {
        return Err(Error::InvalidInput(format!("condition number must be ≥ 1, got {}", spec.kappa)));
    }
    if !(spec.mean_box >= 0.0 && spec.mean_box.is_finite()) {
        return Err(Error::InvalidInput("mean box half-width must be non-negative".into()));
    }
    let g = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    let qr = g.qr();
    let r_diag = qr.r().diagonal();
    let mut u = qr.q();
    for (j, r) in r_diag.iter().enumerate() {
        if *r < 0.0 {
            u.column_mut(j).neg_mut();
        }
    }
    let lambda: Vec<f64> =
        (0..d).map(|i| if d == 1 { 1.0 } else { spec.kappa.powf(i as f64 / (d - 1) as f64 - 0.5) }).collect();
    let sigma_bar = SymMatrix::from_diagonal(&lambda).congruence(&u);
    let inv: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    let precision = SymMatrix::from_diagonal(&inv).congruence(&u);
    let mu_bar = DVector::from_fn(d, |_, _| rng.uniform_range(-spec.mean_box, spec.mean_box));

    let theta_pi = ExponentialFamily::full_gaussian(d).from_mean_cov(mu_bar.as_slice(), &sigma_bar)?;
    let (mu, p) = (mu_bar.clone(), precision);
    let log_density = move |x: &[f64]| {
        let r = DVector::from_column_slice(x) - &mu;
        -0.5 * r.dot(&p.mul_vec(&r))
    };
    Ok(Target::new(d, log_density).with_ground_truth(GroundTruth::Gaussian { mu_bar, sigma_bar, theta_pi }))
}

/// Synthetic data for `y = φ(β0 + Σ βᵢ xᵢ) + noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub d: usize,
    pub j: usize,
    pub j_test: usize,
    pub sigma2: f64,
    pub s: f64,
    pub rho: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self { d: 5, j: 100, j_test: 50, sigma2: 0.5, s: 5.0, rho: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: DVector<f64>,
    /// Bias first, then the `d` feature weights.
    pub beta_bar: DVector<f64>,
    pub sigma2: f64,
    pub s: f64,
    pub rho: f64,
}

/// `1/(1 + e^{−s})` without overflow.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `Φ_β(x) = φ(β0 + Σ βᵢ xᵢ)`.
pub fn predict(beta: &[f64], x: impl Iterator<Item = f64>) -> f64 {
    sigmoid(beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
}

pub fn make_regression_dataset(spec: &RegressionSpec, rng: &mut RngStream) -> Result<RegressionDataset> {
    let RegressionSpec { d, j, j_test, sigma2, s, rho } = *spec;
    if d < 2 {
        return Err(Error::InvalidInput("regression needs d ≥ 2 to hold both a zero and a non-zero weight".into()));
    }
    if j == 0 || j_test == 0 {
        return Err(Error::InvalidInput("train and test sizes must be positive".into()));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidInput(format!("feature box half-width must be positive, got {s}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidInput(format!("spike probability must lie in (0, 1), got {rho}")));
    }
    let beta_bar = loop {
        let mut b = DVector::zeros(d + 1);
        b[0] = rng.standard_normal();
        for i in 1..=d {
            if !rng.bernoulli(rho) {
                b[i] = rng.standard_normal();
            }
        }
        let zeros = b.iter().skip(1).filter(|v| **v == 0.0).count();
        if zeros > 0 && zeros < d {
            break b;
        }
    };
    let sd = sigma2.sqrt();
    let mut draw = |n: usize| {
        let x = DMatrix::from_fn(n, d, |_, _| rng.uniform_range(-s, s));
        let y = DVector::from_fn(n, |r, _| {
            predict(beta_bar.as_slice(), x.row(r).iter().copied()) + sd * rng.standard_normal()
        });
        (x, y)
    };
    let (x, y) = draw(j);
    let (x_test, y_test) = draw(j_test);
    Ok(RegressionDataset { x, y, x_test, y_test, beta_bar, sigma2, s, rho })
}

/// `−Σⱼ (yⱼ − Φ_β(Xⱼ))² / (2σ²) − ½‖β‖²`.
pub fn regression_log_posterior(data: &RegressionDataset, beta: &[f64]) -> Result<f64> {
    if beta.len() != data.x.ncols() + 1 {
        return Err(Error::InvalidInput(format!("β has length {}, expected {}", beta.len(), data.x.ncols() + 1)));
    }
    Ok(log_posterior_unchecked(data, beta))
}

fn log_posterior_unchecked(data: &RegressionDataset, beta: &[f64]) -> f64 {
    let rss: f64 = (0..data.x.nrows())
        .map(|r| {
            let e = data.y[r] - predict(beta, data.x.row(r).iter().copied());
            e * e
        })
        .sum();
    let prior: f64 = beta.iter().map(|b| b * b).sum();
    -rss / (2.0 * data.sigma2) - 0.5 * prior
}

/// `Σⱼ (y_testⱼ − Φ_β(X_testⱼ))²`.
pub fn test_mse(data: &RegressionDataset, beta: &[f64]) -> f64 {
    (0..data.x_test.nrows())
        .map(|r| {
            let e = data.y_test[r] - predict(beta, data.x_test.row(r).iter().copied());
            e * e
        })
        .sum()
}

/// The posterior over `β ∈ R^{d+1}` as a black-box target.
pub fn regression_target(data: &RegressionDataset) -> Target {
    let owned = Arc::new(data.clone());
    let d = data.x.ncols() + 1;
    Target::new(d, move |beta| {
        if beta.len() != d {
            return f64::NAN;
        }
        log_posterior_unchecked(&owned, beta)
    })
    .with_ground_truth(GroundTruth::Regression { beta_bar: data.beta_bar.clone() })
}

/// JSON form of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub beta_bar: Vec<f64>,
    pub sigma2: f64,
    pub s: f64,
    pub rho: f64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub x_test: Vec<Vec<f64>>,
    pub y_test: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl RegressionDataset {
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn to_file(&self) -> DatasetFile {
        DatasetFile {
            beta_bar: self.beta_bar.iter().copied().collect(),
            sigma2: self.sigma2,
            s: self.s,
            rho: self.rho,
            x: rows(&self.x),
            y: self.y.iter().copied().collect(),
            x_test: rows(&self.x_test),
            y_test: self.y_test.iter().copied().collect(),
        }
    }

    /// CSV with header `x1,…,xd,y,split` and split tags `train`/`test`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.d();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".into(), "split".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for (x, y, tag) in [(&self.x, &self.y, "train"), (&self.x_test, &self.y_test, "test")] {
            for r in 0..x.nrows() {
                let cells: Vec<String> = x.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{},{},{}", cells.join(","), y[r], tag)?;
            }
        }
        Ok(())
    }
}

impl TryFrom<DatasetFile> for RegressionDataset {
    type Error = Error;

    fn try_from(f: DatasetFile) -> Result<Self> {
        let d = f.beta_bar.len().checked_sub(1).ok_or_else(|| Error::InvalidInput("empty β̄".into()))?;
        let to_matrix = |rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidInput("feature rows must have length d".into()));
            }
            Ok(DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied()))
        };
        if f.x.len() != f.y.len() || f.x_test.len() != f.y_test.len() {
            return Err(Error::InvalidInput("feature and response counts differ".into()));
        }
        Ok(Self {
            x: to_matrix(&f.x)?,
            y: DVector::from_vec(f.y),
            x_test: to_matrix(&f.x_test)?,
            y_test: DVector::from_vec(f.y_test),
            beta_bar: DVector::from_vec(f.beta_bar),
            sigma2: f.sigma2,
            s: f.s,
            rho: f.rho,
        })
    }
}
