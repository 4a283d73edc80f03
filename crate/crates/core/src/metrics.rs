//! Experiment metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{ExponentialFamily, NaturalParams};
use crate::numerics::{RngStream, SymMatrix};
use crate::targets::{test_mse, RegressionDataset};

/// Number of posterior draws used for the test-error distribution.
pub const DEFAULT_N_BETA: usize = 100;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse_mean: Option<f64>,
    pub mse_cov: Option<f64>,
    pub f1_zeros: Option<f64>,
    pub test_mse_samples: Option<Vec<f64>>,
}

/// `(‖μ̄ − μ‖², ‖Σ̄ − Σ‖²_F)` for the mean and covariance of `q_θ`.
pub fn param_mse(
    fam: &ExponentialFamily,
    theta: &NaturalParams,
    mu_bar: &DVector<f64>,
    sigma_bar: &SymMatrix,
) -> Result<(f64, f64)> {
    if mu_bar.len() != fam.dim() || sigma_bar.dim() != fam.dim() {
        return Err(Error::InvalidInput("ground truth dimension does not match the family".into()));
    }
    let (mu, sigma) = fam.mean_cov(theta)?;
    let fro = sigma.sub(sigma_bar).frobenius_norm();
    Ok(((mu - mu_bar).norm_squared(), fro * fro))
}

/// F1 score of the predicted zero set `{i ≥ 1 : |mu_k[i]| ≤ zero_tol}`
/// against the zero set of `beta_bar`. Index 0 (the bias) is ignored.
///
/// When neither vector has a zero the score is 1; when precision and recall
/// are both 0 it is 0.
pub fn f1_zero_pattern(mu_k: &[f64], beta_bar: &[f64], zero_tol: f64) -> Result<f64> {
    if mu_k.len() != beta_bar.len() {
        return Err(Error::InvalidInput(format!("lengths differ: {} vs {}", mu_k.len(), beta_bar.len())));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (m, b) in mu_k.iter().zip(beta_bar).skip(1) {
        let pred = m.abs() <= zero_tol;
        let truth = *b == 0.0;
        match (pred, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fneg == 0 {
        return Ok(1.0);
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `MSE_test(β) = Σⱼ (y_testⱼ − Φ_β(X_testⱼ))²` for `n_beta` draws
/// `β ∼ q_θ`, in draw order.
pub fn test_mse_distribution(
    fam: &ExponentialFamily,
    theta: &NaturalParams,
    data: &RegressionDataset,
    n_beta: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if fam.dim() != data.d() + 1 {
        return Err(Error::InvalidInput(format!(
            "family dimension {} does not match d + 1 = {}",
            fam.dim(),
            data.d() + 1
        )));
    }
    Ok(fam.sample(theta, n_beta, rng)?.iter().map(|b| test_mse(data, b.as_slice())).collect())
}
