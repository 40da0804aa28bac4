use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::BlockWeights;
use super::VarianceComponents;
use crate::data::Dataset;
use crate::design::FeatureMatrix;

/// Conditional estimate of a study's true effect `κ_j` and its prediction variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEffect {
    pub study: String,
    pub trials: usize,
    pub kappa: f64,
    pub variance: f64,
}

/// `κ̂_j = x_jᵀβ̂ + σ²_ξ 1ᵀM_j⁻¹(θ̃_j - X_jβ̂)`.
///
/// The variance is `σ²_ξ - σ⁴_ξ 1ᵀM_j⁻¹1 + cᵀ Cov(β̂) c` where
/// `c = x_j - X_jᵀ b` and `b = σ²_ξ M_j⁻¹ 1` is the shrinkage weight vector.
pub fn study_shrinkage(
    components: &VarianceComponents,
    dataset: &Dataset,
    x: &FeatureMatrix,
    beta: &DVector<f64>,
    cov_beta: &DMatrix<f64>,
    weights: &BlockWeights,
) -> Vec<StudyEffect> {
    let s2 = components.sigma2_xi;
    let xm = x.matrix();
    let mut offset = 0;
    dataset
        .studies()
        .iter()
        .enumerate()
        .map(|(j, study)| {
            let n = study.trials.len();
            let xj = xm.rows(offset, n);
            let theta_j: Vec<f64> = study.trials.iter().map(|t| t.effect.theta).collect();
            let resid: Vec<f64> = theta_j
                .iter()
                .enumerate()
                .map(|(i, th)| th - xj.row(i).dot(&beta.transpose()))
                .collect();
            let b: Vec<f64> = weights
                .block_apply(j, &vec![1.0; n])
                .into_iter()
                .map(|w| s2 * w)
                .collect();
            let fixed = xj.row(0).dot(&beta.transpose());
            let kappa = fixed + b.iter().zip(&resid).map(|(b, r)| b * r).sum::<f64>();

            let bvec = DVector::from_column_slice(&b);
            let c: DVector<f64> = xj.row(0).transpose() - xj.transpose() * bvec;
            let conditional = s2 - s2 * s2 * weights.block_ones_quadratic(j);
            let propagated = (cov_beta * &c).dot(&c);
            offset += n;
            StudyEffect {
                study: study.id.clone(),
                trials: n,
                kappa,
                variance: (conditional.max(0.0) + propagated).max(0.0),
            }
        })
        .collect()
}
