use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::VarianceComponents;
use crate::data::Dataset;
use crate::design::FeatureMatrix;
use crate::error::{Error, Result};
use crate::special::chisq_sf;

/// Cochran's Q for residual heterogeneity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTest {
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Share of the total variance attributed to each level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISquared {
    pub xi: f64,
    pub zeta: f64,
    pub eps: f64,
}

/// Typical sampling variance of the `m` trials:
/// `(m - 1) Σ w / ((Σ w)² - Σ w²)` with `w = 1/v`.
pub fn pooled_sampling_variance(dataset: &Dataset) -> f64 {
    let v = dataset.variances();
    let m = v.len() as f64;
    let sum_w: f64 = v.iter().map(|x| 1.0 / x).sum();
    let sum_w2: f64 = v.iter().map(|x| 1.0 / (x * x)).sum();
    (m - 1.0) * sum_w / (sum_w * sum_w - sum_w2)
}

/// `I²_x = σ²_x / (σ²_ξ + σ²_ζ + σ²_ε)`; `None` when the total is zero.
pub fn i_squared(components: &VarianceComponents, sigma2_eps: f64) -> Option<ISquared> {
    let total = components.sigma2_xi + components.sigma2_zeta + sigma2_eps;
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let xi = components.sigma2_xi / total;
    let zeta = components.sigma2_zeta / total;
    Some(ISquared {
        xi,
        zeta,
        eps: 1.0 - xi - zeta,
    })
}

/// Q from an inverse-sampling-variance weighted least-squares fit.
pub fn cochran_q(dataset: &Dataset, x: &FeatureMatrix) -> Result<QTest> {
    let m = dataset.num_trials();
    let p = x.ncols();
    if x.nrows() != m {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, dataset has {m} trials",
            x.nrows()
        )));
    }
    if m <= p {
        return Err(Error::Data(format!(
            "Q test needs more trials ({m}) than coefficients ({p})"
        )));
    }
    let mut theta = DVector::from_vec(dataset.thetas());
    // Q is shift invariant when the design spans the constant vector; shifting
    // by the first effect makes identical effects give exactly zero residuals.
    let has_intercept = x.matrix().column_iter().any(|c| c.iter().all(|&v| v == 1.0));
    if has_intercept && m > 0 {
        let shift = theta[0];
        theta.add_scalar_mut(-shift);
    }
    let w = DVector::from_iterator(m, dataset.variances().into_iter().map(|v| 1.0 / v));
    let xm = x.matrix();
    let mut xw = xm.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    let xtwx = xm.transpose() * &xw;
    let xtwy = xw.transpose() * &theta;
    let chol = xtwx
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(x.names().join(", ")))?;
    let beta = chol.solve(&xtwy);
    let resid = &theta - xm * beta;
    let q: f64 = resid.iter().zip(w.iter()).map(|(r, w)| w * r * r).sum();
    let df = m - p;
    Ok(QTest {
        q,
        df,
        p_value: chisq_sf(q.max(0.0), df as u64)?,
    })
}

/// Four significant digits, or `< .0001` below that threshold.
pub fn format_p_value(p: f64) -> String {
    if p < 1e-4 {
        "< .0001".to_string()
    } else {
        let digits = (3 - p.log10().floor() as i32).max(0) as usize;
        format!("{p:.digits$}")
    }
}
