use serde::{Deserialize, Serialize};

use super::svg::{nice_domain, AxisScale, SvgDoc};
use super::{check_pairing, study_color, AxisPolicy, Plot, PlotKind, PlotSpec};
use crate::data::{Dataset, FeatureValue};
use crate::error::{invalid, Result};
use crate::multilevel::{marginal_covariance, BlockWeights, FitResult};
use crate::transforms::backtransform_ci;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPoint {
    pub study: String,
    pub trial: String,
    pub x: f64,
    /// Observed accuracy `k/n`.
    pub p: f64,
    /// Row sum of the inverse marginal covariance.
    pub weight: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub estimate: f64,
    pub lcb: f64,
    pub ucb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionData {
    pub feature: String,
    pub x_scale: AxisScale,
    pub y_scale: AxisScale,
    pub points: Vec<RegressionPoint>,
    pub curve: Vec<CurvePoint>,
}

const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const CURVE_SAMPLES: usize = 60;
const MAX_RADIUS: f64 = 8.0;
const MIN_RADIUS: f64 = 1.5;

/// Observed accuracies against one numeric feature with the backtransformed
/// regression line and its pointwise band. Other features sit at their means.
pub fn regression_plot(
    fit: &FitResult,
    dataset: &Dataset,
    feature: &str,
    spec: &PlotSpec,
) -> Result<Plot<RegressionData>> {
    spec.validate(PlotKind::Regression)?;
    check_pairing(fit, dataset)?;
    let column = fit
        .design
        .group(feature)
        .filter(|g| g.columns.len() == 1)
        .map(|g| g.columns.start)
        .ok_or_else(|| invalid(format!("'{feature}' is not a single-column feature of the model")))?;
    let values: Vec<f64> = dataset
        .studies()
        .iter()
        .map(|s| match s.feature(feature) {
            FeatureValue::Number(x) => Ok(*x),
            _ => Err(invalid(format!(
                "'{feature}' is not numeric in study '{}'",
                s.id
            ))),
        })
        .collect::<Result<_>>()?;

    let weights = BlockWeights::new(&marginal_covariance(&fit.components, dataset))?.row_sums();
    let w_max = weights.iter().copied().fold(0.0, f64::max);
    let mut points = Vec::with_capacity(dataset.num_trials());
    let mut i = 0;
    for (s, study) in dataset.studies().iter().enumerate() {
        for trial in &study.trials {
            let w = weights[i];
            let rel = if w_max > 0.0 { (w.max(0.0) / w_max).sqrt() } else { 1.0 };
            points.push(RegressionPoint {
                study: study.id.clone(),
                trial: trial.id.clone(),
                x: values[s],
                p: trial.outcome.proportion(),
                weight: w,
                radius: (MAX_RADIUS * rel).max(MIN_RADIUS),
            });
            i += 1;
        }
    }

    let x_lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total_n: f64 = dataset.trials().map(|t| t.outcome.n() as f64).sum();
    let mut row = fit.mean_design_row();
    let curve = (0..=CURVE_SAMPLES)
        .map(|k| {
            let x = x_lo + (x_hi - x_lo) * k as f64 / CURVE_SAMPLES as f64;
            row[column] = x;
            let (est, var) = fit.predict(&row);
            let n_hat = if var > 0.0 { 1.0 / var } else { total_n };
            let bt = backtransform_ci(est, var, fit.num_studies, spec.alpha(), n_hat)?;
            Ok(CurvePoint {
                x,
                estimate: bt.p_bar,
                lcb: bt.lcb,
                ucb: bt.ucb,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let y_domain = match spec.axis {
        AxisPolicy::Unit => [0.0, 1.0],
        AxisPolicy::Data => {
            let lo = points.iter().map(|p| p.p).chain(curve.iter().map(|c| c.lcb)).fold(1.0, f64::min);
            let hi = points.iter().map(|p| p.p).chain(curve.iter().map(|c| c.ucb)).fold(0.0, f64::max);
            let d = nice_domain(lo, hi, 6);
            [d[0].max(0.0), d[1].min(1.0)]
        }
    };
    let x_scale = AxisScale::new(nice_domain(x_lo, x_hi, 6), [LEFT, spec.width - RIGHT]);
    let y_scale = AxisScale::new(y_domain, [spec.height - BOTTOM, TOP]);

    let mut doc = SvgDoc::new(spec.width, spec.height);
    doc.open("class=\"points\" fill-opacity=\"0.75\" stroke=\"#333333\" stroke-width=\"0.5\"");
    let study_pos = |id: &str| dataset.studies().iter().position(|s| s.id == id).unwrap_or(0);
    for p in &points {
        doc.circle(
            x_scale.map(p.x),
            y_scale.map(p.p),
            p.radius,
            &format!("fill=\"{}\"", study_color(study_pos(&p.study))),
        );
    }
    doc.close();
    let line = |f: fn(&CurvePoint) -> f64| -> Vec<(f64, f64)> {
        curve.iter().map(|c| (x_scale.map(c.x), y_scale.map(f(c)))).collect()
    };
    doc.polyline(&line(|c| c.lcb), "class=\"band\" stroke=\"#000000\" stroke-dasharray=\"5 3\"");
    doc.polyline(&line(|c| c.ucb), "class=\"band\" stroke=\"#000000\" stroke-dasharray=\"5 3\"");
    doc.polyline(&line(|c| c.estimate), "class=\"fit\" stroke=\"#000000\" stroke-width=\"2\"");
    doc.x_axis(&x_scale, y_scale.range[0], feature);
    doc.y_axis(&y_scale, LEFT, "Overall accuracy");

    let data = RegressionData {
        feature: feature.to_string(),
        x_scale,
        y_scale,
        points,
        curve,
    };
    Ok(Plot::new(doc.finish(), *spec, data))
}
