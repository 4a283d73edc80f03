//! Variational inference by Bregman proximal gradient over exponential
//! families.
//!
//! The crate approximates a target density `π` by a member `q_θ` of a
//! Gaussian exponential family, minimizing the Rényi divergence
//! `RD_α(π, q_θ)` plus an optional regularizer `r(θ)`. Each iteration is a
//! relaxed moment-matching step in mean-parameter space followed by a Bregman
//! proximal step on `r`:
//!
//! ```text
//! q_{θ_{k+½}}(Γ) = τ π_{θ_k}^{(α)}(Γ) + (1 − τ) q_{θ_k}(Γ)
//! θ_{k+1}        = argmin_θ' r(θ') + (1/τ) KL(q_{θ_{k+½}}, q_θ')
//! ```
//!
//! where `π_θ^{(α)} ∝ π^α q_θ^{1−α}` is the geometric average of target and
//! proposal.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`numerics`] | symmetric eigensolver, Cholesky, log-sum-exp, seeded RNG streams |
//! | [`expfam`] | full / diagonal / centered 1-D Gaussian families, `A`, `∇A`, `(∇A)⁻¹` |
//! | [`divergences`] | in-family KL and Rényi, gradient of the objective, quadrature oracle |
//! | [`targets`] | Gaussian and sigmoid-regression black-box targets |
//! | [`regularizers`] | closed-form Bregman proximal maps |
//! | [`algorithms`] | exact PRMM, Monte Carlo PRMM, VRB baseline |
//! | [`metrics`] | parameter MSE, zero-pattern F1, predictive test MSE |
//!
//! ```
//! use bregman_vi::prelude::*;
//!
//! let fam = ExponentialFamily::full_gaussian(2);
//! let target = fam
//!     .from_mean_cov(&[0.5, -0.5], &SymMatrix::identity(2))
//!     .unwrap();
//! let theta0 = fam.from_mean_cov(&[5.0, 5.0], &SymMatrix::identity(2).scaled(10.0)).unwrap();
//! let trace = prmm_exact(
//!     &fam,
//!     &InFamilyTarget::new(target.clone()),
//!     &Regularizer::Null,
//!     RenyiOrder::KL,
//!     &Schedule::constant(1.0, 0, 5),
//!     &theta0,
//! )
//! .unwrap();
//! assert!(trace.final_theta().max_abs_diff(&target) < 1e-9);
//! ```

pub mod algorithms;
pub mod divergences;
pub mod error;
pub mod expfam;
pub mod metrics;
pub mod numerics;
pub mod regularizers;
pub mod targets;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::algorithms::{
        mc_prmm, prmm_exact, renyi_bound_estimate, vrb, IterationRecord, McOptions, RunStatus, RunTrace, Schedule,
        WeightedBatch,
    };
    pub use crate::divergences::{
        geometric_average_in_family, grad_f, kl_in_family, renyi_in_family, GeometricAverage, InFamilyTarget,
        QuadratureGrid, QuadratureTarget, RenyiOrder,
    };
    pub use crate::error::{Error, Result};
    pub use crate::expfam::{ExponentialFamily, MatrixBlock, MeanParams, NaturalParams, ParamVector};
    pub use crate::metrics::{f1_zero_pattern, param_mse, test_mse_distribution};
    pub use crate::numerics::{RngStream, SymMatrix};
    pub use crate::regularizers::Regularizer;
    pub use crate::targets::Target;
}
