//! Gaussian exponential families in natural and mean parametrization.
//!
//! A parameter lives in `H = R^p × S`, where the matrix block `S` is either a
//! dense symmetric matrix (full-covariance Gaussian) or a vector standing for
//! a diagonal (diagonal-covariance and centered 1-D Gaussians). The inner
//! product on `H` is the vector dot product plus the Frobenius product on the
//! matrix block.
//!
//! | family | Γ(x) | θ | A(θ) |
//! |--------|------|---|------|
//! | full | `(x, x xᵀ)` | `(Σ⁻¹μ, −½Σ⁻¹)` | `d/2 log 2π − ¼ θ1ᵀθ2⁻¹θ1 − ½ logdet(−2θ2)` |
//! | diagonal, frame `Q` | `(Qᵀx, (Qᵀx)²)` | `(Qᵀμ/σ², −1/(2σ²))` | `d/2 log 2π − ¼ Σ θ1ᵢ²/θ2ᵢ − ½ Σ log(−2θ2ᵢ)` |
//! | centered 1-D | `x²` | `−1/(2σ²)` | `½ log 2π − ½ log(−2θ)` |
//!
//! Every `NaturalParams` and `MeanParams` is validated on construction; the
//! rest of the crate relies on that.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cholesky, RngStream, SymMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixBlock {
    Sym(SymMatrix),
    Diag(DVector<f64>),
}

impl MatrixBlock {
    fn dot(&self, other: &MatrixBlock) -> f64 {
        match (self, other) {
            (MatrixBlock::Sym(a), MatrixBlock::Sym(b)) => a.frobenius_dot(b),
            (MatrixBlock::Diag(a), MatrixBlock::Diag(b)) => a.dot(b),
            _ => panic!("matrix block layouts differ"),
        }
    }

    fn lincomb(a: f64, x: &MatrixBlock, b: f64, y: &MatrixBlock) -> MatrixBlock {
        match (x, y) {
            (MatrixBlock::Sym(x), MatrixBlock::Sym(y)) => MatrixBlock::Sym(SymMatrix::lincomb(a, x, b, y)),
            (MatrixBlock::Diag(x), MatrixBlock::Diag(y)) => MatrixBlock::Diag(x * a + y * b),
            _ => panic!("matrix block layouts differ"),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            MatrixBlock::Sym(m) => Box::new(m.as_matrix().iter().copied()),
            MatrixBlock::Diag(v) => Box::new(v.iter().copied()),
        }
    }

    fn same_layout(&self, other: &MatrixBlock) -> bool {
        match (self, other) {
            (MatrixBlock::Sym(a), MatrixBlock::Sym(b)) => a.dim() == b.dim(),
            (MatrixBlock::Diag(a), MatrixBlock::Diag(b)) => a.len() == b.len(),
            _ => false,
        }
    }

    pub fn as_sym(&self) -> Option<&SymMatrix> {
        match self {
            MatrixBlock::Sym(m) => Some(m),
            MatrixBlock::Diag(_) => None,
        }
    }

    pub fn as_diag(&self) -> Option<&DVector<f64>> {
        match self {
            MatrixBlock::Diag(v) => Some(v),
            MatrixBlock::Sym(_) => None,
        }
    }
}

/// An element of the parameter space `H`: a vector block and a matrix block.
/// Used for natural parameters, mean parameters and gradients alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub vector: DVector<f64>,
    pub matrix: MatrixBlock,
}

impl ParamVector {
    pub fn new(vector: DVector<f64>, matrix: MatrixBlock) -> Self {
        Self { vector, matrix }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.vector.dot(&other.vector) + self.matrix.dot(&other.matrix)
    }

    /// `a·x + b·y`.
    pub fn lincomb(a: f64, x: &ParamVector, b: f64, y: &ParamVector) -> ParamVector {
        ParamVector { vector: &x.vector * a + &y.vector * b, matrix: MatrixBlock::lincomb(a, &x.matrix, b, &y.matrix) }
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        Self::lincomb(1.0, self, 1.0, other)
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        Self::lincomb(1.0, self, -1.0, other)
    }

    pub fn scaled(&self, c: f64) -> ParamVector {
        Self::lincomb(c, self, 0.0, self)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn zeros_like(&self) -> ParamVector {
        self.scaled(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.vector.iter().all(|v| v.is_finite()) && self.matrix.values().all(|v| v.is_finite())
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.vector.len() == other.vector.len() && self.matrix.same_layout(&other.matrix)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        let v = self.vector.iter().zip(other.vector.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let m = self.matrix.values().zip(other.matrix.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v.max(m)
    }

    /// Flattened coordinates: the vector block, then the matrix block
    /// (row-major for dense blocks).
    pub fn to_flat(&self) -> Vec<f64> {
        self.vector.iter().copied().chain(self.matrix.values()).collect()
    }
}

/// A validated point `θ` in the interior of the natural parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams(ParamVector);

impl NaturalParams {
    pub fn theta1(&self) -> &DVector<f64> {
        &self.0.vector
    }

    pub fn theta2(&self) -> &MatrixBlock {
        &self.0.matrix
    }

    pub fn as_vector(&self) -> &ParamVector {
        &self.0
    }

    pub fn into_vector(self) -> ParamVector {
        self.0
    }

    pub fn max_abs_diff(&self, other: &NaturalParams) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// A validated point `η = ∇A(θ)` in the interior of dom A*.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanParams(ParamVector);

impl MeanParams {
    pub fn m1(&self) -> &DVector<f64> {
        &self.0.vector
    }

    pub fn m2(&self) -> &MatrixBlock {
        &self.0.matrix
    }

    pub fn as_vector(&self) -> &ParamVector {
        &self.0
    }

    pub fn into_vector(self) -> ParamVector {
        self.0
    }
}

/// Location and covariance, in the coordinates the family works in: `μ` for
/// the full family, `Qᵀμ` and per-axis variances for the diagonal family, and
/// an empty location with a single variance for the centered family.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentForm {
    pub loc: DVector<f64>,
    pub cov: Covariance,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(SymMatrix),
    Diag(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    FullGaussian,
    /// Covariance `Q diag(σ²) Qᵀ` for a fixed orthonormal frame `Q`.
    DiagGaussian {
        frame: DMatrix<f64>,
    },
    CenteredGaussian1D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFamily {
    kind: FamilyKind,
    dim: usize,
}

impl ExponentialFamily {
    pub fn full_gaussian(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { kind: FamilyKind::FullGaussian, dim }
    }

    /// Diagonal covariance in the canonical frame (`Q = I`).
    pub fn diag_gaussian(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        Self { kind: FamilyKind::DiagGaussian { frame: DMatrix::identity(dim, dim) }, dim }
    }

    pub fn diag_gaussian_with_frame(frame: DMatrix<f64>) -> Result<Self> {
        let d = frame.nrows();
        if d == 0 || frame.ncols() != d {
            return Err(Error::InvalidInput("frame must be a non-empty square matrix".into()));
        }
        let err = (frame.transpose() * &frame - DMatrix::<f64>::identity(d, d)).norm();
        if !(err <= 1e-10 * (d as f64).sqrt()) {
            return Err(Error::InvalidInput(format!("frame is not orthonormal (‖QᵀQ − I‖_F = {err:e})")));
        }
        Ok(Self { kind: FamilyKind::DiagGaussian { frame }, dim: d })
    }

    pub fn centered_1d() -> Self {
        Self { kind: FamilyKind::CenteredGaussian1D, dim: 1 }
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    /// Dimension of the sample space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::FullGaussian => "full_gaussian",
            FamilyKind::DiagGaussian { .. } => "diag_gaussian",
            FamilyKind::CenteredGaussian1D => "centered_1d",
        }
    }

    pub fn frame(&self) -> Option<&DMatrix<f64>> {
        match &self.kind {
            FamilyKind::DiagGaussian { frame } => Some(frame),
            _ => None,
        }
    }

    fn vector_len(&self) -> usize {
        match self.kind {
            FamilyKind::CenteredGaussian1D => 0,
            _ => self.dim,
        }
    }

    fn check_layout(&self, p: &ParamVector) -> Result<()> {
        let ok = p.vector.len() == self.vector_len()
            && match (&self.kind, &p.matrix) {
                (FamilyKind::FullGaussian, MatrixBlock::Sym(m)) => m.dim() == self.dim,
                (FamilyKind::DiagGaussian { .. }, MatrixBlock::Diag(v)) => v.len() == self.dim,
                (FamilyKind::CenteredGaussian1D, MatrixBlock::Diag(v)) => v.len() == 1,
                _ => false,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "parameter layout does not match the {} family of dimension {}",
                self.name(),
                self.dim
            )))
        }
    }

    /// A zero element of `H` with this family's layout.
    pub fn zero_param(&self) -> ParamVector {
        let matrix = match self.kind {
            FamilyKind::FullGaussian => MatrixBlock::Sym(SymMatrix::zeros(self.dim)),
            FamilyKind::DiagGaussian { .. } => MatrixBlock::Diag(DVector::zeros(self.dim)),
            FamilyKind::CenteredGaussian1D => MatrixBlock::Diag(DVector::zeros(1)),
        };
        ParamVector::new(DVector::zeros(self.vector_len()), matrix)
    }

    /// Whether `p` lies in the interior of Θ.
    pub fn is_in_domain(&self, p: &ParamVector) -> bool {
        self.natural(p.clone()).is_ok()
    }

    /// Validates `p` as natural parameters.
    pub fn natural(&self, p: ParamVector) -> Result<NaturalParams> {
        self.check_layout(&p)?;
        if !p.is_finite() {
            return Err(Error::DomainViolation("non-finite natural parameters".into()));
        }
        match &p.matrix {
            MatrixBlock::Sym(t2) => {
                cholesky(&t2.scaled(-2.0))
                    .map_err(|_| Error::DomainViolation("−2θ2 is not positive definite".into()))?;
            }
            MatrixBlock::Diag(t2) => {
                if t2.iter().any(|&v| !(v < 0.0)) {
                    return Err(Error::DomainViolation("θ2 has a non-negative entry".into()));
                }
            }
        }
        Ok(NaturalParams(p))
    }

    /// Validates `p` as mean parameters (the covariance it implies must be
    /// positive definite).
    pub fn mean(&self, p: ParamVector) -> Result<MeanParams> {
        self.check_layout(&p)?;
        self.moment_form_of_mean(&p)?;
        Ok(MeanParams(p))
    }

    fn moment_form_of_mean(&self, p: &ParamVector) -> Result<MomentForm> {
        if !p.is_finite() {
            return Err(Error::DualDomainViolation("non-finite mean parameters".into()));
        }
        let loc = p.vector.clone();
        let cov = match &p.matrix {
            MatrixBlock::Sym(m2) => {
                let c = m2.sub(&SymMatrix::outer(&loc));
                cholesky(&c).map_err(|_| Error::DualDomainViolation("m2 − m1 m1ᵀ is not positive definite".into()))?;
                Covariance::Full(c)
            }
            MatrixBlock::Diag(m2) => {
                let var = if loc.is_empty() {
                    m2.clone()
                } else {
                    DVector::from_iterator(m2.len(), m2.iter().zip(loc.iter()).map(|(s, m)| s - m * m))
                };
                if var.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::DualDomainViolation("a variance m2ᵢ − m1ᵢ² is not positive".into()));
                }
                Covariance::Diag(var)
            }
        };
        Ok(MomentForm { loc, cov })
    }

    /// Location and covariance of `q_θ` in family coordinates.
    pub fn moment_form(&self, theta: &NaturalParams) -> Result<MomentForm> {
        match theta.theta2() {
            MatrixBlock::Sym(t2) => {
                let prec = cholesky(&t2.scaled(-2.0))
                    .map_err(|_| Error::DomainViolation("−2θ2 is not positive definite".into()))?;
                let loc = prec.solve(theta.theta1());
                Ok(MomentForm { loc, cov: Covariance::Full(prec.inverse()) })
            }
            MatrixBlock::Diag(t2) => {
                let var = t2.map(|v| -0.5 / v);
                let loc =
                    if theta.theta1().is_empty() { DVector::zeros(0) } else { theta.theta1().component_mul(&var) };
                Ok(MomentForm { loc, cov: Covariance::Diag(var) })
            }
        }
    }

    /// Natural parameters of the member with the given location/covariance.
    pub fn natural_from_moment_form(&self, mf: &MomentForm) -> Result<NaturalParams> {
        let p = match &mf.cov {
            Covariance::Full(cov) => {
                let prec = cholesky(cov)
                    .map_err(|_| Error::DomainViolation("covariance is not positive definite".into()))?
                    .inverse();
                ParamVector::new(prec.mul_vec(&mf.loc), MatrixBlock::Sym(prec.scaled(-0.5)))
            }
            Covariance::Diag(var) => {
                if var.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::DomainViolation("variance is not positive".into()));
                }
                let t1 = if mf.loc.is_empty() { DVector::zeros(0) } else { mf.loc.component_div(var) };
                ParamVector::new(t1, MatrixBlock::Diag(var.map(|v| -0.5 / v)))
            }
        };
        self.natural(p)
    }

    /// Natural parameters from a mean vector and covariance given in sample
    /// coordinates. For the diagonal family `cov` must be diagonal in the
    /// family frame; for the centered family `mean` must be zero.
    pub fn from_mean_cov(&self, mean: &[f64], cov: &SymMatrix) -> Result<NaturalParams> {
        if mean.len() != self.dim || cov.dim() != self.dim {
            return Err(Error::InvalidInput("mean/covariance dimension mismatch".into()));
        }
        let mean = DVector::from_column_slice(mean);
        let mf = match &self.kind {
            FamilyKind::FullGaussian => MomentForm { loc: mean, cov: Covariance::Full(cov.clone()) },
            FamilyKind::DiagGaussian { frame } => {
                let rotated = cov.congruence_t(frame);
                let off = rotated.sub(&SymMatrix::from_diagonal(rotated.diagonal().as_slice())).frobenius_norm();
                if off > 1e-10 * rotated.frobenius_norm().max(1.0) {
                    return Err(Error::InvalidInput("covariance is not diagonal in the family frame".into()));
                }
                MomentForm { loc: frame.transpose() * mean, cov: Covariance::Diag(rotated.diagonal()) }
            }
            FamilyKind::CenteredGaussian1D => {
                if mean[0] != 0.0 {
                    return Err(Error::InvalidInput("centered family requires a zero mean".into()));
                }
                MomentForm { loc: DVector::zeros(0), cov: Covariance::Diag(cov.diagonal()) }
            }
        };
        self.natural_from_moment_form(&mf)
    }

    /// Mean and covariance of `q_θ` in sample coordinates.
    pub fn mean_cov(&self, theta: &NaturalParams) -> Result<(DVector<f64>, SymMatrix)> {
        let mf = self.moment_form(theta)?;
        Ok(match (&self.kind, mf.cov) {
            (FamilyKind::FullGaussian, Covariance::Full(c)) => (mf.loc, c),
            (FamilyKind::DiagGaussian { frame }, Covariance::Diag(var)) => {
                (frame * &mf.loc, SymMatrix::from_diagonal(var.as_slice()).congruence(frame))
            }
            (FamilyKind::CenteredGaussian1D, Covariance::Diag(var)) => {
                (DVector::zeros(1), SymMatrix::from_diagonal(var.as_slice()))
            }
            _ => unreachable!("moment form layout follows the family"),
        })
    }

    /// `Γ(x)`.
    pub fn sufficient_statistics(&self, x: &[f64]) -> Result<ParamVector> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "sample has length {}, family dimension is {}",
                x.len(),
                self.dim
            )));
        }
        let x = DVector::from_column_slice(x);
        Ok(match &self.kind {
            FamilyKind::FullGaussian => {
                let outer = SymMatrix::outer(&x);
                ParamVector::new(x, MatrixBlock::Sym(outer))
            }
            FamilyKind::DiagGaussian { frame } => {
                let y = frame.transpose() * x;
                let sq = y.map(|v| v * v);
                ParamVector::new(y, MatrixBlock::Diag(sq))
            }
            FamilyKind::CenteredGaussian1D => {
                ParamVector::new(DVector::zeros(0), MatrixBlock::Diag(DVector::from_element(1, x[0] * x[0])))
            }
        })
    }

    /// The log-partition function `A(θ)`.
    pub fn log_partition(&self, theta: &NaturalParams) -> Result<f64> {
        let d = self.dim as f64;
        match theta.theta2() {
            MatrixBlock::Sym(t2) => {
                let prec = cholesky(&t2.scaled(-2.0))
                    .map_err(|_| Error::DomainViolation("−2θ2 is not positive definite".into()))?;
                let y = prec.solve_lower(theta.theta1());
                Ok(0.5 * d * LN_2PI + 0.5 * y.norm_squared() - 0.5 * prec.logdet())
            }
            MatrixBlock::Diag(t2) => {
                let quad: f64 = theta.theta1().iter().zip(t2.iter()).map(|(a, b)| -0.25 * a * a / b).sum();
                let logdet: f64 = t2.iter().map(|v| (-2.0 * v).ln()).sum();
                Ok(0.5 * d * LN_2PI + quad - 0.5 * logdet)
            }
        }
    }

    /// `∇A(θ) = E_{q_θ}[Γ]`.
    pub fn moments(&self, theta: &NaturalParams) -> Result<MeanParams> {
        let mf = self.moment_form(theta)?;
        Ok(MeanParams(self.mean_vector_of(&mf)))
    }

    fn mean_vector_of(&self, mf: &MomentForm) -> ParamVector {
        let m2 = match &mf.cov {
            Covariance::Full(c) => MatrixBlock::Sym(c.add(&SymMatrix::outer(&mf.loc))),
            Covariance::Diag(var) => {
                if mf.loc.is_empty() {
                    MatrixBlock::Diag(var.clone())
                } else {
                    MatrixBlock::Diag(var + mf.loc.map(|m| m * m))
                }
            }
        };
        ParamVector::new(mf.loc.clone(), m2)
    }

    /// Mean parameters of a location/covariance pair, validated.
    pub fn mean_from_moment_form(&self, mf: &MomentForm) -> Result<MeanParams> {
        self.mean(self.mean_vector_of(mf))
    }

    /// `(∇A)⁻¹(η) = ∇A*(η)`.
    pub fn natural_from_moments(&self, eta: &MeanParams) -> Result<NaturalParams> {
        let mf = self.moment_form_of_mean(eta.as_vector())?;
        self.natural_from_moment_form(&mf)
    }

    /// Location/covariance of validated mean parameters.
    pub fn moment_form_from_mean(&self, eta: &MeanParams) -> Result<MomentForm> {
        self.moment_form_of_mean(eta.as_vector())
    }

    /// `log q_θ(x) = ⟨θ, Γ(x)⟩ − A(θ)`.
    pub fn log_density(&self, theta: &NaturalParams, x: &[f64]) -> Result<f64> {
        let a = self.log_partition(theta)?;
        Ok(theta.as_vector().dot(&self.sufficient_statistics(x)?) - a)
    }

    /// `log q_θ` at many points, sharing one evaluation of `A(θ)`.
    pub fn log_density_many(&self, theta: &NaturalParams, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        let a = self.log_partition(theta)?;
        xs.iter().map(|x| Ok(theta.as_vector().dot(&self.sufficient_statistics(x.as_slice())?) - a)).collect()
    }

    /// `n` draws `x = μ + L z` with `L Lᵀ = Σ`.
    pub fn sample(&self, theta: &NaturalParams, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be positive".into()));
        }
        let mf = self.moment_form(theta)?;
        match (&self.kind, &mf.cov) {
            (FamilyKind::FullGaussian, Covariance::Full(c)) => {
                let l = cholesky(c).map_err(|_| Error::DomainViolation("covariance not positive definite".into()))?;
                Ok((0..n).map(|_| &mf.loc + l.factor() * rng.standard_normal_vec(self.dim)).collect())
            }
            (FamilyKind::DiagGaussian { frame }, Covariance::Diag(var)) => {
                let sd = var.map(f64::sqrt);
                Ok((0..n).map(|_| frame * (&mf.loc + sd.component_mul(&rng.standard_normal_vec(self.dim)))).collect())
            }
            (FamilyKind::CenteredGaussian1D, Covariance::Diag(var)) => {
                let sd = var[0].sqrt();
                Ok((0..n).map(|_| DVector::from_element(1, sd * rng.standard_normal())).collect())
            }
            _ => unreachable!("moment form layout follows the family"),
        }
    }

    /// JSON form `{family, d, Q?, theta1, theta2}`.
    pub fn params_to_json(&self, theta: &NaturalParams) -> ParamsFile {
        let theta2 = match theta.theta2() {
            MatrixBlock::Sym(m) => Theta2Json::Matrix(m.to_rows()),
            MatrixBlock::Diag(v) => Theta2Json::Vector(v.iter().copied().collect()),
        };
        ParamsFile {
            family: self.name().to_string(),
            d: self.dim,
            q: self.frame().map(|f| f.row_iter().map(|r| r.iter().copied().collect()).collect()),
            theta1: theta.theta1().iter().copied().collect(),
            theta2,
        }
    }
}

/// Serialized natural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub family: String,
    pub d: usize,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    pub theta1: Vec<f64>,
    pub theta2: Theta2Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta2Json {
    Matrix(Vec<Vec<f64>>),
    Vector(Vec<f64>),
}

impl ParamsFile {
    pub fn into_params(self) -> Result<(ExponentialFamily, NaturalParams)> {
        let fam = match self.family.as_str() {
            "full_gaussian" => ExponentialFamily::full_gaussian(self.d.max(1)),
            "diag_gaussian" => match self.q {
                Some(rows) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::InvalidInput("Q must be square".into()));
                    }
                    let flat: Vec<f64> = rows.into_iter().flatten().collect();
                    ExponentialFamily::diag_gaussian_with_frame(DMatrix::from_row_slice(n, n, &flat))?
                }
                None => ExponentialFamily::diag_gaussian(self.d.max(1)),
            },
            "centered_1d" => ExponentialFamily::centered_1d(),
            other => return Err(Error::InvalidInput(format!("unknown family '{other}'"))),
        };
        if fam.dim() != self.d {
            return Err(Error::InvalidInput(format!("d = {} does not match the family", self.d)));
        }
        let matrix = match self.theta2 {
            Theta2Json::Matrix(rows) => MatrixBlock::Sym(SymMatrix::try_from(rows)?),
            Theta2Json::Vector(v) => MatrixBlock::Diag(DVector::from_vec(v)),
        };
        let theta = fam.natural(ParamVector::new(DVector::from_vec(self.theta1), matrix))?;
        Ok((fam, theta))
    }
}

/// `½ log(2π)`.
pub fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}
