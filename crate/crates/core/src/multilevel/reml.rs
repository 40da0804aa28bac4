//! Variance-component estimation by (restricted) maximum likelihood.
//!
//! The profile objective is optimized with Nelder–Mead over
//! `(log σ²_ξ, log σ²_ζ)`. Both components are floored at [`VARIANCE_FLOOR`];
//! points below the floor are evaluated at the floor plus a quadratic penalty
//! so the simplex contracts onto the boundary instead of drifting.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::{marginal_covariance, BlockWeights};
use super::heterogeneity::{cochran_q, i_squared, pooled_sampling_variance};
use super::shrinkage::study_shrinkage;
use super::{BoundaryFlags, FitResult, VarianceComponents};
use crate::data::Dataset;
use crate::design::FeatureMatrix;
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Smallest variance the optimizer visits; estimates at the floor are reported as 0.
pub const VARIANCE_FLOOR: f64 = 1e-12;
const VARIANCE_CEILING: f64 = 1e2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    Reml,
    Ml,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub likelihood: Likelihood,
    /// Hold `σ²_ζ` at this value and estimate only `σ²_ξ`.
    pub fixed_sigma2_zeta: Option<f64>,
    pub optimizer: NelderMeadOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            likelihood: Likelihood::Reml,
            fixed_sigma2_zeta: None,
            optimizer: NelderMeadOptions {
                step: 1.0,
                f_rel_tol: 1e-10,
                x_tol: 1e-8,
                max_evals: 20_000,
            },
        }
    }
}

/// GLS quantities at fixed variance components.
pub(crate) struct GlsState {
    pub weights: BlockWeights,
    pub beta: DVector<f64>,
    pub cov_beta: DMatrix<f64>,
    pub log_det_xtwx: f64,
    pub quad: f64,
}

pub(crate) fn gls(
    components: &VarianceComponents,
    dataset: &Dataset,
    x: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> Result<GlsState> {
    let weights = BlockWeights::new(&marginal_covariance(components, dataset))?;
    let wx = weights.apply(x);
    let xtwx = x.transpose() * &wx;
    let chol = xtwx
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("XᵀWX is not positive definite".into()))?;
    let xtwy = wx.transpose() * theta;
    let beta = chol.solve(&xtwy);
    let log_det_xtwx = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let cov_beta = chol.inverse();
    let resid = theta - x * &beta;
    let quad = resid.dot(&weights.apply_vec(&resid));
    Ok(GlsState {
        weights,
        beta,
        cov_beta,
        log_det_xtwx,
        quad,
    })
}

struct Problem<'a> {
    dataset: &'a Dataset,
    x: &'a DMatrix<f64>,
    theta: DVector<f64>,
    likelihood: Likelihood,
    log_det_xtx: f64,
}

impl Problem<'_> {
    fn log_likelihood(&self, state: &GlsState) -> f64 {
        let m = self.theta.len() as f64;
        let p = self.x.ncols() as f64;
        let log_det_m = state.weights.log_det();
        match self.likelihood {
            Likelihood::Ml => -0.5 * (m * (2.0 * PI).ln() + log_det_m + state.quad),
            Likelihood::Reml => {
                -0.5 * ((m - p) * (2.0 * PI).ln() - self.log_det_xtx
                    + log_det_m
                    + state.log_det_xtwx
                    + state.quad)
            }
        }
    }

    fn negative_log_likelihood(&self, components: &VarianceComponents) -> f64 {
        match gls(components, self.dataset, self.x, &self.theta) {
            Ok(state) => -self.log_likelihood(&state),
            Err(_) => f64::INFINITY,
        }
    }
}

/// REML fit with default options.
pub fn reml_fit(dataset: &Dataset, x: &FeatureMatrix) -> Result<FitResult> {
    fit(dataset, x, &FitOptions::default())
}

pub fn fit(dataset: &Dataset, x: &FeatureMatrix, options: &FitOptions) -> Result<FitResult> {
    let m = dataset.num_trials();
    let p = x.ncols();
    if x.nrows() != m {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows, dataset has {m} trials",
            x.nrows()
        )));
    }
    if p >= m {
        return Err(Error::Data(format!(
            "{p} coefficients need more than {p} trials, got {m}"
        )));
    }
    x.check_full_rank()?;
    if let Some(z) = options.fixed_sigma2_zeta {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::InvalidArgument(format!("fixed σ²_ζ must be >= 0, got {z}")));
        }
    }

    let xm = x.matrix();
    let log_det_xtx = (xm.transpose() * xm)
        .cholesky()
        .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
        .ok_or_else(|| Error::RankDeficient(x.names().join(", ")))?;
    let problem = Problem {
        dataset,
        x: xm,
        theta: DVector::from_vec(dataset.thetas()),
        likelihood: options.likelihood,
        log_det_xtx,
    };

    let lo = VARIANCE_FLOOR.ln();
    let hi = VARIANCE_CEILING.ln();
    let decode = |z: f64| -> (f64, f64) {
        let clamped = z.clamp(lo, hi);
        (clamped.exp(), (z - clamped).powi(2))
    };
    let fixed_zeta = options.fixed_sigma2_zeta;
    let objective = |z: &[f64]| -> f64 {
        let (xi, pen_xi) = decode(z[0]);
        let (zeta, pen_zeta) = match fixed_zeta {
            Some(value) => (value, 0.0),
            None => decode(z[1]),
        };
        problem.negative_log_likelihood(&VarianceComponents {
            sigma2_xi: xi,
            sigma2_zeta: zeta,
        }) + pen_xi
            + pen_zeta
    };

    let start = moment_start(dataset, xm, &problem.theta);
    let starts: Vec<Vec<f64>> = match fixed_zeta {
        Some(_) => {
            let total = start.sigma2_xi + start.sigma2_zeta;
            vec![
                vec![total.ln()],
                vec![(total * 10.0).ln()],
                vec![(total / 10.0).ln()],
            ]
        }
        None => {
            let (a, b) = (start.sigma2_xi, start.sigma2_zeta);
            vec![
                vec![a.ln(), b.ln()],
                vec![(a * 10.0).ln(), (b / 10.0).ln()],
                vec![(a / 10.0).ln(), (b * 10.0).ln()],
            ]
        }
    };

    let mut best = None;
    let mut evaluations = 0;
    for s in &starts {
        let result = nelder_mead(objective, s, &options.optimizer);
        evaluations += result.evals;
        let better = match &best {
            None => true,
            Some(b) => {
                let b: &crate::optimize::Minimum = b;
                (result.converged && !b.converged)
                    || (result.converged == b.converged && result.value < b.value)
            }
        };
        if better {
            best = Some(result);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::Convergence(format!(
            "no start met the tolerance within {} evaluations",
            options.optimizer.max_evals
        )));
    }

    let at_floor = |z: f64| z < lo + 1e-3;
    let mut boundary = BoundaryFlags::default();
    let sigma2_xi = if at_floor(best.x[0]) {
        boundary.sigma2_xi = true;
        0.0
    } else {
        decode(best.x[0]).0
    };
    let sigma2_zeta = match fixed_zeta {
        Some(value) => value,
        None if at_floor(best.x[1]) => {
            boundary.sigma2_zeta = true;
            0.0
        }
        None => decode(best.x[1]).0,
    };
    let components = VarianceComponents {
        sigma2_xi,
        sigma2_zeta,
    };
    assemble(dataset, x, &problem, components, boundary, evaluations)
}

fn assemble(
    dataset: &Dataset,
    x: &FeatureMatrix,
    problem: &Problem<'_>,
    components: VarianceComponents,
    boundary: BoundaryFlags,
    evaluations: usize,
) -> Result<FitResult> {
    let state = gls(&components, dataset, x.matrix(), &problem.theta)?;
    let log_likelihood = problem.log_likelihood(&state);
    let q_test = cochran_q(dataset, x)?;
    let sigma2_eps = pooled_sampling_variance(dataset);
    let var_mu = state.cov_beta[(0, 0)];
    let study_effects = study_shrinkage(
        &components,
        dataset,
        x,
        &state.beta,
        &state.cov_beta,
        &state.weights,
    );
    Ok(FitResult {
        components,
        boundary,
        likelihood: problem.likelihood,
        design: x.clone(),
        mu: state.beta[0],
        var_mu,
        n_hat: 1.0 / var_mu,
        beta: state.beta,
        cov_beta: symmetrize(state.cov_beta),
        q_test,
        sigma2_eps,
        i_squared: i_squared(&components, sigma2_eps),
        log_likelihood,
        study_effects,
        num_studies: dataset.num_studies(),
        num_trials: dataset.num_trials(),
        evaluations,
    })
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Method-of-moments starting values from OLS residuals.
fn moment_start(dataset: &Dataset, x: &DMatrix<f64>, theta: &DVector<f64>) -> VarianceComponents {
    let m = theta.len();
    let p = x.ncols();
    let h = dataset.num_studies();
    let mean_v = dataset.variances().iter().sum::<f64>() / m as f64;

    let resid = match (x.transpose() * x).cholesky() {
        Some(chol) => theta - x * chol.solve(&(x.transpose() * theta)),
        None => theta - DVector::from_element(m, theta.mean()),
    };
    let total = resid.norm_squared() / (m - p).max(1) as f64 - mean_v;

    let mut within_ss = 0.0;
    let mut offset = 0;
    for study in dataset.studies() {
        let n = study.trials.len();
        let seg = resid.rows(offset, n);
        let mean = seg.mean();
        within_ss += seg.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
        offset += n;
    }
    let within = if m > h {
        within_ss / (m - h) as f64 - mean_v
    } else {
        0.0
    };

    let scale = total.max(0.0) + mean_v;
    let floor = 0.05 * scale;
    VarianceComponents {
        sigma2_xi: (total - within.max(0.0)).max(floor),
        sigma2_zeta: within.max(floor),
    }
}
