//! SVG figures and tables for fitted models.
//!
//! Every plot comes with a JSON sidecar holding the plotted numbers and the
//! axis scales, so each mark's pixel position can be recomputed from the
//! sidecar alone. Output is a pure function of the inputs.

mod forest;
mod funnel;
mod importance;
mod regplot;
mod selection;
mod svg;
mod table;

use serde::{Deserialize, Serialize};

pub use forest::{forest_plot, ForestData, ForestRow};
pub use funnel::{funnel_plot, FunnelData, FunnelPoint};
pub use importance::{importance_plot, ImportanceData, ImportanceRow};
pub use regplot::{regression_plot, CurvePoint, RegressionData, RegressionPoint};
pub use selection::{selection_plot, SelectionData, SelectionFailure, SelectionPanel, SelectionRow};
pub use svg::AxisScale;
pub use table::{summary_table, Coefficient, SummaryColumn, SummaryTable, TableRow};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::multilevel::{FitResult, StudyEffect};
use crate::transforms::{backtransform_ci, BacktransformedEstimate};

/// Version of every JSON document written by this module.
pub const SCHEMA_VERSION: u32 = 1;

/// Categorical colors, assigned by study position and cycled past 20.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7",
    "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

pub fn study_color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Forest,
    Funnel,
    Regression,
    Selection,
    Importance,
}

/// How the proportion axis is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisPolicy {
    /// Tight around the plotted values, rounded outward.
    #[default]
    Data,
    /// The whole unit interval.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    pub width: f64,
    pub height: f64,
    /// Coverage of the drawn intervals, e.g. 0.95.
    pub confidence: f64,
    pub axis: AxisPolicy,
}

impl PlotSpec {
    pub fn new(kind: PlotKind) -> Self {
        let (width, height) = match kind {
            PlotKind::Selection => (960.0, 520.0),
            _ => (800.0, 600.0),
        };
        Self {
            kind,
            width,
            height,
            confidence: 0.95,
            axis: AxisPolicy::Data,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn with_size(mut self, width: f64, height: f64) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_axis(mut self, axis: AxisPolicy) -> Self {
        self.axis = axis;
        self
    }

    pub fn alpha(&self) -> f64 {
        1.0 - self.confidence
    }

    pub(crate) fn validate(&self, expected: PlotKind) -> Result<()> {
        if self.kind != expected {
            return Err(invalid(format!("plot spec is for {:?}, not {:?}", self.kind, expected)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        if !(self.width > 0.0 && self.height > 0.0 && self.width.is_finite() && self.height.is_finite()) {
            return Err(invalid(format!(
                "plot dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Wrapper written next to every SVG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar<T> {
    pub schema_version: u32,
    pub spec: PlotSpec,
    pub data: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot<T> {
    pub svg: String,
    pub sidecar: Sidecar<T>,
}

impl<T: Serialize> Plot<T> {
    pub(crate) fn new(svg: String, spec: PlotSpec, data: T) -> Self {
        Self {
            svg,
            sidecar: Sidecar {
                schema_version: SCHEMA_VERSION,
                spec,
                data,
            },
        }
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.sidecar).expect("sidecar serializes");
        s.push('\n');
        s
    }
}

/// Pooled estimate at the column means of the design, as `(DA value, variance, proportion)`.
///
/// For an intercept-only model this is `μ̂`. The effective sample size is
/// `1/Var`; a zero variance falls back to the total number of test instances.
pub fn population_estimate(
    fit: &FitResult,
    dataset: &Dataset,
    alpha: f64,
) -> Result<(f64, f64, BacktransformedEstimate)> {
    let (est, var) = fit.predict(&fit.mean_design_row());
    let n_hat = if var > 0.0 {
        1.0 / var
    } else {
        dataset.trials().map(|t| t.outcome.n() as f64).sum()
    };
    let bt = backtransform_ci(est, var, fit.num_studies, alpha, n_hat)?;
    Ok((est, var, bt))
}

/// Backtransformed `κ̂_j` with `n̂_j = 1/Var(κ̂_j)`, or the study's total
/// test-set size when that variance is zero.
pub fn study_estimate(
    effect: &StudyEffect,
    dataset: &Dataset,
    h: usize,
    alpha: f64,
) -> Result<BacktransformedEstimate> {
    let n_hat = if effect.variance > 0.0 {
        1.0 / effect.variance
    } else {
        dataset
            .studies()
            .iter()
            .find(|s| s.id == effect.study)
            .map(|s| s.trials.iter().map(|t| t.outcome.n() as f64).sum())
            .unwrap_or(1.0)
    };
    backtransform_ci(effect.kappa, effect.variance.max(0.0), h, alpha, n_hat)
}

pub(crate) fn check_pairing(fit: &FitResult, dataset: &Dataset) -> Result<()> {
    if fit.num_trials != dataset.num_trials() || fit.num_studies != dataset.num_studies() {
        return Err(invalid(format!(
            "fit covers {} trials in {} studies but the dataset has {} in {}",
            fit.num_trials,
            fit.num_studies,
            dataset.num_trials(),
            dataset.num_studies()
        )));
    }
    Ok(())
}
