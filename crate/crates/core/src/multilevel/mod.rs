//! Three-level random-effects model: trials within studies within a population.
//!
//! `θ̃_ij = x_jᵀβ + ξ_j + ζ_ij + ε_ij` with `ξ_j ~ N(0, σ²_ξ)`,
//! `ζ_ij ~ N(0, σ²_ζ)` and `ε_ij ~ N(0, v_ij)`. Variance components are
//! estimated by (restricted) maximum likelihood; fixed effects by GLS.

mod covariance;
mod heterogeneity;
mod reml;
mod shrinkage;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use covariance::{
    block_weight_solve, marginal_covariance, BlockCovariance, BlockWeights, CompoundSymmetricBlock,
};
pub use heterogeneity::{
    cochran_q, format_p_value, i_squared, pooled_sampling_variance, ISquared, QTest,
};
pub use reml::{fit, reml_fit, FitOptions, Likelihood, VARIANCE_FLOOR};
pub use shrinkage::{study_shrinkage, StudyEffect};

use crate::design::FeatureMatrix;

/// Between-study (`σ²_ξ`) and within-study (`σ²_ζ`) variances on the DA² scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma2_xi: f64,
    pub sigma2_zeta: f64,
}

/// Which components ended on the lower boundary and were reported as exactly 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFlags {
    pub sigma2_xi: bool,
    pub sigma2_zeta: bool,
}

/// Everything produced by one model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub components: VarianceComponents,
    pub boundary: BoundaryFlags,
    pub likelihood: Likelihood,
    pub design: FeatureMatrix,
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    /// Intercept on the DA scale.
    pub mu: f64,
    pub var_mu: f64,
    /// `1 / Var(μ)`, the effective sample size used for backtransformation.
    pub n_hat: f64,
    pub q_test: QTest,
    pub sigma2_eps: f64,
    pub i_squared: Option<ISquared>,
    /// Maximized log-likelihood of the kind in `likelihood`, constants included.
    pub log_likelihood: f64,
    pub study_effects: Vec<StudyEffect>,
    pub num_studies: usize,
    pub num_trials: usize,
    pub evaluations: usize,
}

impl FitResult {
    pub fn column_names(&self) -> &[String] {
        self.design.names()
    }

    pub fn num_coefficients(&self) -> usize {
        self.beta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.cov_beta.diagonal().iter().map(|v| v.sqrt()).collect()
    }

    /// Fixed-effects predictions `Xβ̂` in trial order.
    pub fn fitted(&self) -> DVector<f64> {
        self.design.matrix() * &self.beta
    }

    /// Linear predictor `xᵀβ̂` and its variance `xᵀ Cov(β̂) x` at a design row.
    pub fn predict(&self, row: &[f64]) -> (f64, f64) {
        let x = DVector::from_column_slice(row);
        let est = x.dot(&self.beta);
        let var = (self.cov_beta.transpose() * &x).dot(&x);
        (est, var.max(0.0))
    }

    /// Column means of the design matrix over trials.
    pub fn mean_design_row(&self) -> Vec<f64> {
        let x = self.design.matrix();
        (0..x.ncols()).map(|c| x.column(c).mean()).collect()
    }
}
