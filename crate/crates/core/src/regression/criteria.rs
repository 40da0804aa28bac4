use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::FeatureMatrix;
use crate::error::{Error, Result};
use crate::multilevel::{fit, reml_fit, FitOptions, FitResult, Likelihood};

/// Proportional reduction of one variance component. `value` is `None` when
/// the null-model component is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquaredValue {
    pub value: Option<f64>,
    /// The raw ratio was negative and was truncated to 0.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub xi: RSquaredValue,
    pub zeta: RSquaredValue,
}

fn reduction(null: f64, with_features: f64) -> RSquaredValue {
    if !(null > 0.0) {
        return RSquaredValue {
            value: None,
            truncated: false,
        };
    }
    let raw = 1.0 - with_features / null;
    RSquaredValue {
        value: Some(raw.clamp(0.0, 1.0)),
        truncated: raw < 0.0,
    }
}

/// `R²_x = 1 - σ²_x(X) / σ²_x(0)`, truncated below at 0.
pub fn r_squared(fit_null: &FitResult, fit_feat: &FitResult) -> Result<RSquared> {
    if fit_null.num_trials != fit_feat.num_trials || fit_null.num_studies != fit_feat.num_studies {
        return Err(Error::InvalidArgument(
            "R² needs two fits on the same dataset".into(),
        ));
    }
    if fit_null.num_coefficients() != 1 {
        return Err(Error::InvalidArgument(
            "the reference fit for R² must be intercept-only".into(),
        ));
    }
    Ok(r_squared_from(
        fit_null.components.sigma2_xi,
        fit_null.components.sigma2_zeta,
        fit_feat.components.sigma2_xi,
        fit_feat.components.sigma2_zeta,
    ))
}

pub fn r_squared_from(null_xi: f64, null_zeta: f64, feat_xi: f64, feat_zeta: f64) -> RSquared {
    RSquared {
        xi: reduction(null_xi, feat_xi),
        zeta: reduction(null_zeta, feat_zeta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
    Rmse,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "rmse" => Ok(Criterion::Rmse),
            other => Err(Error::InvalidArgument(format!(
                "unknown criterion '{other}' (expected aic, bic or rmse)"
            ))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Rmse => "RMSE",
        })
    }
}

/// Fit statistics for one fixed-effect structure.
///
/// `aic`/`bic` come from a full maximum-likelihood refit; the `_reml`
/// variants use the restricted likelihood of the REML fit instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub rmse: f64,
    pub aic_reml: f64,
    pub bic_reml: f64,
    pub ml_loglik: f64,
    pub reml_loglik: f64,
    /// Fixed effects plus the two variance components.
    pub parameters: usize,
}

impl InformationCriteria {
    pub fn value(&self, criterion: Criterion, likelihood: Likelihood) -> f64 {
        match (criterion, likelihood) {
            (Criterion::Aic, Likelihood::Ml) => self.aic,
            (Criterion::Aic, Likelihood::Reml) => self.aic_reml,
            (Criterion::Bic, Likelihood::Ml) => self.bic,
            (Criterion::Bic, Likelihood::Reml) => self.bic_reml,
            (Criterion::Rmse, _) => self.rmse,
        }
    }
}

/// In-sample RMSE of the fixed-effects predictions on the DA scale.
pub fn fixed_effects_rmse(dataset: &Dataset, fit: &FitResult) -> f64 {
    let fitted = fit.fitted();
    let m = dataset.num_trials() as f64;
    let sse: f64 = dataset
        .thetas()
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    (sse / m).sqrt()
}

pub fn information_criteria(dataset: &Dataset, x: &FeatureMatrix) -> Result<InformationCriteria> {
    let reml = reml_fit(dataset, x)?;
    criteria_for(dataset, x, &reml)
}

/// Information criteria reusing an existing REML fit of the same design.
pub fn criteria_for(dataset: &Dataset, x: &FeatureMatrix, reml: &FitResult) -> Result<InformationCriteria> {
    let ml = fit(
        dataset,
        x,
        &FitOptions {
            likelihood: Likelihood::Ml,
            ..FitOptions::default()
        },
    )?;
    let m = dataset.num_trials() as f64;
    let p = x.ncols();
    let k = (p + 2) as f64;
    Ok(InformationCriteria {
        aic: -2.0 * ml.log_likelihood + 2.0 * k,
        bic: -2.0 * ml.log_likelihood + k * m.ln(),
        rmse: fixed_effects_rmse(dataset, reml),
        aic_reml: -2.0 * reml.log_likelihood + 2.0 * k,
        bic_reml: -2.0 * reml.log_likelihood + k * (m - p as f64).ln(),
        ml_loglik: ml.log_likelihood,
        reml_loglik: reml.log_likelihood,
        parameters: p + 2,
    })
}
