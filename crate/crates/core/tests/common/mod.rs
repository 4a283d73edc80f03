#![allow(dead_code)]

use bregman_vi::prelude::*;
use nalgebra::DMatrix;

pub fn random_cov(d: usize, rng: &mut RngStream, jitter: f64) -> SymMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    SymMatrix::new(&a * a.transpose() / d as f64 + DMatrix::identity(d, d) * jitter).unwrap()
}

pub fn random_full(fam: &ExponentialFamily, rng: &mut RngStream) -> NaturalParams {
    let d = fam.dim();
    let mu: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    fam.from_mean_cov(&mu, &random_cov(d, rng, 0.3)).unwrap()
}

/// A member whose covariance eigenvalues lie in `[lo, hi]`.
pub fn random_bounded(fam: &ExponentialFamily, rng: &mut RngStream, lo: f64, hi: f64) -> NaturalParams {
    let d = fam.dim();
    let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
    let q = a.qr().q();
    let eig: Vec<f64> = (0..d).map(|_| rng.uniform_range(lo, hi)).collect();
    let cov = SymMatrix::from_diagonal(&eig).congruence(&q);
    let mu: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    fam.from_mean_cov(&mu, &cov).unwrap()
}

/// Symmetric direction of unit norm in the layout of `like`.
pub fn random_direction(like: &ParamVector, rng: &mut RngStream) -> ParamVector {
    let vector = like.vector.map(|_| rng.standard_normal());
    let matrix = match &like.matrix {
        MatrixBlock::Sym(m) => {
            let d = m.dim();
            let a = DMatrix::from_fn(d, d, |_, _| rng.standard_normal());
            MatrixBlock::Sym(SymMatrix::new((&a + a.transpose()) * 0.5).unwrap())
        }
        MatrixBlock::Diag(v) => MatrixBlock::Diag(v.map(|_| rng.standard_normal())),
    };
    let p = ParamVector::new(vector, matrix);
    let n = p.norm();
    p.scaled(1.0 / n)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
