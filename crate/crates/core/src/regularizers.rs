//! Regularizers `r` with closed-form Bregman proximal maps
//!
//! ```text
//! prox_{τr}(θ) = argmin_θ' r(θ') + (1/τ) d_A(θ', θ)
//! ```
//!
//! Both nontrivial maps are computed from the mean parameters of `θ`:
//!
//! * `EigenBox(b1, b2)`: indicator of `b1 I ≼ −2θ2 ≼ b2 I` (full family). The
//!   mean is kept and the precision eigenvalues are clamped to `[b1, b2]`.
//! * `SparseMeanL1(η)`: `Σ ηᵢ |(θ1)ᵢ|` (diagonal family). The rotated mean is
//!   soft-thresholded at `τηᵢ` and each variance absorbs the change so that
//!   the second moment is preserved.

use serde::{Deserialize, Serialize};

use crate::divergences::kl_in_family;
use crate::error::{Error, Result};
use crate::expfam::{Covariance, ExponentialFamily, FamilyKind, MatrixBlock, MeanParams, MomentForm, NaturalParams};
use crate::numerics::{sym_eigen, SymMatrix};

const BOX_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    Null,
    EigenBox {
        b1: f64,
        b2: f64,
    },
    SparseMeanL1 {
        eta: Vec<f64>,
        /// Leave coordinate 0 (a bias) unpenalized.
        #[serde(default)]
        skip_index_0: bool,
    },
}

/// Result of a proximal step. `active` is set when the map moved the point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxOutput {
    pub theta: NaturalParams,
    pub active: bool,
}

impl Regularizer {
    pub fn eigen_box(b1: f64, b2: f64) -> Result<Self> {
        let r = Regularizer::EigenBox { b1, b2 };
        r.validate()?;
        Ok(r)
    }

    pub fn sparse_mean_l1(eta: Vec<f64>, skip_index_0: bool) -> Result<Self> {
        let r = Regularizer::SparseMeanL1 { eta, skip_index_0 };
        r.validate()?;
        Ok(r)
    }

    /// The same weight on every coordinate.
    pub fn uniform_l1(eta: f64, d: usize, skip_index_0: bool) -> Result<Self> {
        Self::sparse_mean_l1(vec![eta; d], skip_index_0)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Null => "null",
            Regularizer::EigenBox { .. } => "eigen_box",
            Regularizer::SparseMeanL1 { .. } => "sparse_mean_l1",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::Null => Ok(()),
            Regularizer::EigenBox { b1, b2 } => {
                if b1.is_finite() && b2.is_finite() && *b1 > 0.0 && b1 <= b2 {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("eigen box needs 0 < b1 ≤ b2, got b1 = {b1}, b2 = {b2}")))
                }
            }
            Regularizer::SparseMeanL1 { eta, .. } => {
                if eta.iter().all(|v| v.is_finite() && *v >= 0.0) {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("ℓ1 weights must be finite and non-negative".into()))
                }
            }
        }
    }

    /// Checks that this regularizer has a closed-form prox on `fam`.
    pub fn check_family(&self, fam: &ExponentialFamily) -> Result<()> {
        self.validate()?;
        match (self, fam.kind()) {
            (Regularizer::Null, _) => Ok(()),
            (Regularizer::EigenBox { .. }, FamilyKind::FullGaussian) => Ok(()),
            (Regularizer::SparseMeanL1 { eta, .. }, FamilyKind::DiagGaussian { .. }) => {
                if eta.len() == fam.dim() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!(
                        "ℓ1 weights have length {}, family dimension is {}",
                        eta.len(),
                        fam.dim()
                    )))
                }
            }
            _ => Err(Error::UnsupportedRegularizer { regularizer: self.name(), family: fam.name() }),
        }
    }

    /// `r(θ)`. The eigen box returns `+∞` outside the box.
    pub fn evaluate(&self, fam: &ExponentialFamily, theta: &NaturalParams) -> Result<f64> {
        self.check_family(fam)?;
        match self {
            Regularizer::Null => Ok(0.0),
            Regularizer::EigenBox { b1, b2 } => {
                let MatrixBlock::Sym(t2) = theta.theta2() else { unreachable!("checked family") };
                let eig = sym_eigen(&t2.scaled(-2.0))?;
                let inside = eig.min() >= b1 - BOX_TOLERANCE && eig.max() <= b2 + BOX_TOLERANCE;
                Ok(if inside { 0.0 } else { f64::INFINITY })
            }
            Regularizer::SparseMeanL1 { eta, skip_index_0 } => Ok(theta
                .theta1()
                .iter()
                .zip(eta)
                .enumerate()
                .filter(|(i, _)| !(*skip_index_0 && *i == 0))
                .map(|(_, (t, e))| e * t.abs())
                .sum()),
        }
    }

    /// `prox_{τr}` evaluated at the point with mean parameters `eta_half`.
    pub fn prox_from_moments(&self, fam: &ExponentialFamily, eta_half: &MeanParams, tau: f64) -> Result<ProxOutput> {
        self.check_family(fam)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("prox step must be positive, got {tau}")));
        }
        let mf = fam.moment_form_from_mean(eta_half)?;
        match self {
            Regularizer::Null => Ok(ProxOutput { theta: fam.natural_from_moment_form(&mf)?, active: false }),
            Regularizer::EigenBox { b1, b2 } => {
                let Covariance::Full(cov) = &mf.cov else { unreachable!("checked family") };
                let eig = sym_eigen(cov)?;
                let mut active = false;
                let clamped: Vec<f64> = eig
                    .eigenvalues
                    .iter()
                    .map(|s| {
                        let lam = 1.0 / s;
                        let c = lam.clamp(*b1, *b2);
                        active |= c != lam;
                        c
                    })
                    .collect();
                let prec = SymMatrix::from_diagonal(&clamped).congruence(&eig.basis);
                let p = crate::expfam::ParamVector::new(prec.mul_vec(&mf.loc), MatrixBlock::Sym(prec.scaled(-0.5)));
                Ok(ProxOutput { theta: fam.natural(p)?, active })
            }
            Regularizer::SparseMeanL1 { eta, skip_index_0 } => {
                let Covariance::Diag(var) = &mf.cov else { unreachable!("checked family") };
                let mut loc = mf.loc.clone();
                let mut new_var = var.clone();
                let mut active = false;
                for i in 0..loc.len() {
                    let level = if *skip_index_0 && i == 0 { 0.0 } else { tau * eta[i] };
                    let m = mf.loc[i];
                    let t = soft_threshold(m, level);
                    if t != m {
                        active = true;
                        loc[i] = t;
                        new_var[i] = var[i] + (m * m - t * t);
                    }
                }
                let out = MomentForm { loc, cov: Covariance::Diag(new_var) };
                Ok(ProxOutput { theta: fam.natural_from_moment_form(&out)?, active })
            }
        }
    }

    /// `prox_{τr}(θ_half)`.
    pub fn bregman_prox(&self, fam: &ExponentialFamily, theta_half: &NaturalParams, tau: f64) -> Result<NaturalParams> {
        Ok(self.prox_from_moments(fam, &fam.moments(theta_half)?, tau)?.theta)
    }

    /// `r(θ') + (1/τ) d_A(θ', θ_half)`, the function the prox minimizes.
    pub fn prox_objective(
        &self,
        fam: &ExponentialFamily,
        theta_prime: &NaturalParams,
        theta_half: &NaturalParams,
        tau: f64,
    ) -> Result<f64> {
        Ok(self.evaluate(fam, theta_prime)? + kl_in_family(fam, theta_half, theta_prime)? / tau)
    }
}

pub fn soft_threshold(x: f64, level: f64) -> f64 {
    if x > level {
        x - level
    } else if x < -level {
        x + level
    } else {
        0.0
    }
}
