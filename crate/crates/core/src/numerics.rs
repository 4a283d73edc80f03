//! Dense symmetric linear algebra, log-domain reductions and the seeded
//! random stream used by every sampler in the crate.
//!
//! The eigensolver is a cyclic Jacobi iteration: it is simple, accurate to a
//! few ulps of `‖m‖_F` for the dimensions used here (d ≤ 100) and has no
//! LAPACK dependency. Positive-definiteness is decided by Cholesky with
//! strictly positive pivots.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_REL_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const MIN_PIVOT: f64 = 1e-300;

/// A dense symmetric matrix. Symmetry is exact: construction averages the
/// input with its transpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("symmetric matrix must have dim >= 1".into()));
        }
        Ok(Self::symmetrize(m))
    }

    fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    /// `v vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        SymMatrix::symmetrize(v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Frobenius inner product `tr(AᵀB)`.
    pub fn frobenius_dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix::symmetrize(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix::symmetrize(&self.0 - &other.0)
    }

    /// `a·self + b·other`.
    pub fn lincomb(a: f64, x: &SymMatrix, b: f64, y: &SymMatrix) -> Self {
        SymMatrix::symmetrize(&x.0 * a + &y.0 * b)
    }

    /// `Uᵀ·self·U` for any conformable `U`.
    pub fn congruence_t(&self, u: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(u.transpose() * &self.0 * u)
    }

    /// `U·self·Uᵀ`.
    pub fn congruence(&self, u: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrize(u * &self.0 * u.transpose())
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("matrix rows must all have length d".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        SymMatrix::from_row_slice(n, &flat)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored as the columns of `basis`.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl SpectralDecomp {
    /// `U diag(f(λ)) Uᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = DVector::from_iterator(self.eigenvalues.len(), self.eigenvalues.iter().map(|&l| f(l)));
        SymMatrix::from_diagonal(mapped.as_slice()).congruence(&self.basis)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(m: &SymMatrix) -> Result<SpectralDecomp> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("sym_eigen: non-finite entries".into()));
    }
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = m.frobenius_norm();
    let target = JACOBI_REL_TOL * scale;

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                if t == 0.0 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, t);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut basis = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        basis.set_column(col, &v.column(i));
    }
    Ok(SpectralDecomp { eigenvalues, basis })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

// One Jacobi rotation annihilating a[p][q]; updates the accumulated basis.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = a.nrows();
    let apq = a[(p, q)];
    let tau = s / (1.0 + c);
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            let arp = a[(r, p)];
            let arq = a[(r, q)];
            let new_rp = arp - s * (arq + tau * arp);
            let new_rq = arq + s * (arp - tau * arq);
            a[(r, p)] = new_rp;
            a[(p, r)] = new_rp;
            a[(r, q)] = new_rq;
            a[(q, r)] = new_rq;
        }
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp - s * (vrq + tau * vrp);
        v[(r, q)] = vrq + s * (vrp - tau * vrq);
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = m`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.dim();
    let a = m.as_matrix();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        // `!(d > MIN_PIVOT)` also rejects NaN pivots.
        if !(d > MIN_PIVOT) {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = y.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    /// Solves `m x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L⁻¹ B` column by column.
    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for c in 0..b.ncols() {
            let col = self.solve_lower(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        let linv = self.solve_lower_matrix(&DMatrix::identity(n, n));
        SymMatrix::symmetrize(linv.transpose() * linv)
    }
}

/// `log Σ exp(v_i)` computed as `max(v) + log Σ exp(v_i − max(v))`.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidInput("log_sum_exp of an empty slice".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max.is_nan() || max == f64::INFINITY {
        return Err(Error::InvalidInput("log_sum_exp: entries must lie in [-inf, +inf)".into()));
    }
    let s: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + s.ln())
}

/// A reproducible random stream: ChaCha8 keyed by `seed`, with `stream_id`
/// selecting an independent counter stream. Normals are drawn with the
/// ziggurat sampler of `rand_distr`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn standard_normal_vec(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.standard_normal())
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::random::<f64>(&mut self.rng)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_symmetric(d: usize, rng: &mut RngStream) -> SymMatrix {
        SymMatrix::new(DMatrix::from_fn(d, d, |_, _| rng.standard_normal())).unwrap()
    }

    fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
        (u.transpose() * u - DMatrix::identity(u.ncols(), u.ncols())).norm()
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0])).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn eigen_identity() {
        let e = sym_eigen(&SymMatrix::identity(2)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0]);
        assert!(orthonormality_error(&e.basis) < 1e-14);
    }

    #[test]
    fn eigen_diagonal_sorted() {
        let e = sym_eigen(&SymMatrix::from_diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 3.0]);
        assert_abs_diff_eq!(e.basis[(1, 0)].abs(), 1.0);
        assert_abs_diff_eq!(e.basis[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn eigen_two_by_two() {
        let m = SymMatrix::from_row_slice(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = sym_eigen(&m).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1], 3.0, epsilon = 1e-14);
        let r = 0.5f64.sqrt();
        // Eigenvectors are defined up to sign.
        let v0 = e.basis.column(0);
        let v1 = e.basis.column(1);
        assert_abs_diff_eq!((v0[0] * r - v0[1] * r).abs(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!((v1[0] * r + v1[1] * r).abs(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let m = SymMatrix::from_row_slice(2, &[1.0, f64::NAN, f64::NAN, 1.0]).unwrap();
        assert!(matches!(sym_eigen(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eigen_random_reconstruction() {
        let mut rng = RngStream::new(7, 0);
        for trial in 0..1000 {
            let d = 1 + trial % 40;
            let m = random_symmetric(d, &mut rng);
            let e = sym_eigen(&m).unwrap();
            let err = e.reconstruct().sub(&m).frobenius_norm();
            assert!(err <= 1e-10 * m.frobenius_norm(), "d={d} err={err}");
            assert!(orthonormality_error(&e.basis) <= 1e-10 * (d as f64).sqrt());
            assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(c.factor(), &DMatrix::identity(3, 3));
        let c = cholesky(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_eq!(c.factor(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_abs_diff_eq!(c.logdet(), 36f64.ln(), epsilon = 1e-14);
        let bad = SymMatrix::from_row_slice(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(cholesky(&bad).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn cholesky_recovers_random_factor() {
        let mut rng = RngStream::new(11, 0);
        for trial in 0..200 {
            let d = 1 + trial % 12;
            let l = DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    0.5 + rng.uniform()
                } else if i > j {
                    rng.standard_normal()
                } else {
                    0.0
                }
            });
            let m = SymMatrix::new(&l * l.transpose()).unwrap();
            let c = cholesky(&m).unwrap();
            assert!((c.factor() - &l).norm() < 1e-10, "trial {trial}");
            let b = rng.standard_normal_vec(d);
            assert!((m.mul_vec(&c.solve(&b)) - &b).norm() < 1e-9 * (1.0 + b.norm()));
            let inv = c.inverse();
            assert!((inv.as_matrix() * m.as_matrix() - DMatrix::identity(d, d)).norm() < 1e-8);
        }
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0, 1000.0]).unwrap(), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
        assert!(log_sum_exp(&[]).is_err());
    }

    proptest! {
        #[test]
        fn log_sum_exp_shift(v in proptest::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let lhs = log_sum_exp(&shifted).unwrap();
            let rhs = log_sum_exp(&v).unwrap() + c;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn rng_streams_reproducible_and_distinct() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        let mut c = RngStream::new(42, 4);
        let mut differs = false;
        for _ in 0..10_000 {
            let x = a.uniform();
            assert_eq!(x.to_bits(), b.uniform().to_bits());
            differs |= x != c.uniform();
        }
        assert!(differs);
    }
}
