use serde::{Deserialize, Serialize};

use super::svg::{nice_domain, AxisScale, SvgDoc};
use super::{check_pairing, study_color, Plot, PlotKind, PlotSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::multilevel::FitResult;
use crate::special::t_quantile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelPoint {
    pub study: String,
    pub trial: String,
    pub theta: f64,
    pub se: f64,
    pub inside_dark: bool,
    pub inside_light: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelData {
    pub x_scale: AxisScale,
    /// Standard error axis; `range` runs downward so small errors sit on top.
    pub y_scale: AxisScale,
    pub mu: f64,
    pub t_critical: f64,
    /// `σ²_ξ + σ²_ζ`, added to `v` for the light wedge.
    pub heterogeneity: f64,
    /// Polygon vertices in data coordinates `(θ, se)`.
    pub dark_wedge: Vec<[f64; 2]>,
    pub light_wedge: Vec<[f64; 2]>,
    pub points: Vec<FunnelPoint>,
    pub fraction_inside_light: f64,
}

const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const EDGE_SAMPLES: usize = 40;

/// Effect sizes against their standard errors with sampling-only (dark) and
/// total-variance (light) prediction wedges around `μ̂`.
pub fn funnel_plot(fit: &FitResult, dataset: &Dataset, spec: &PlotSpec) -> Result<Plot<FunnelData>> {
    spec.validate(PlotKind::Funnel)?;
    check_pairing(fit, dataset)?;
    let t = t_quantile(1.0 - spec.alpha() / 2.0, (fit.num_studies - 1) as f64)?;
    let mu = fit.mu;
    let tau2 = fit.components.sigma2_xi + fit.components.sigma2_zeta;

    let mut points = Vec::with_capacity(dataset.num_trials());
    for study in dataset.studies() {
        for trial in &study.trials {
            let dev = (trial.effect.theta - mu).abs();
            points.push(FunnelPoint {
                study: study.id.clone(),
                trial: trial.id.clone(),
                theta: trial.effect.theta,
                se: trial.effect.v.sqrt(),
                inside_dark: dev <= t * trial.effect.v.sqrt(),
                inside_light: dev <= t * (tau2 + trial.effect.v).sqrt(),
            });
        }
    }
    let se_max = points.iter().map(|p| p.se).fold(0.0, f64::max);
    let y_domain = [0.0, nice_domain(0.0, se_max * 1.05, 5)[1]];
    let y_top = y_domain[1];

    let edge = |se: f64, total: bool| t * if total { (tau2 + se * se).sqrt() } else { se };
    let dark_wedge = vec![
        [mu, 0.0],
        [mu + edge(y_top, false), y_top],
        [mu - edge(y_top, false), y_top],
    ];
    let ses: Vec<f64> = (0..=EDGE_SAMPLES)
        .map(|i| y_top * i as f64 / EDGE_SAMPLES as f64)
        .collect();
    let mut light_wedge: Vec<[f64; 2]> = ses.iter().map(|&s| [mu + edge(s, true), s]).collect();
    light_wedge.extend(ses.iter().rev().map(|&s| [mu - edge(s, true), s]));

    let half = edge(y_top, true);
    let lo = points.iter().map(|p| p.theta).fold(mu - half, f64::min);
    let hi = points.iter().map(|p| p.theta).fold(mu + half, f64::max);
    let x_scale = AxisScale::new(nice_domain(lo, hi, 6), [LEFT, spec.width - RIGHT]);
    let y_scale = AxisScale::new(y_domain, [TOP, spec.height - BOTTOM]);
    let project = |v: &[[f64; 2]]| -> Vec<(f64, f64)> {
        v.iter().map(|p| (x_scale.map(p[0]), y_scale.map(p[1]))).collect()
    };

    let mut doc = SvgDoc::new(spec.width, spec.height);
    doc.polygon(&project(&light_wedge), "class=\"light-wedge\" fill=\"#d9d9d9\"");
    doc.polygon(&project(&dark_wedge), "class=\"dark-wedge\" fill=\"#969696\"");
    let mx = x_scale.map(mu);
    doc.line(mx, y_scale.range[0], mx, y_scale.range[1], "class=\"mu-line\" stroke=\"#000000\"");
    doc.open("class=\"points\" stroke=\"#000000\" stroke-width=\"0.5\"");
    let mut j = 0;
    for (s, study) in dataset.studies().iter().enumerate() {
        for _ in &study.trials {
            let p = &points[j];
            doc.circle(
                x_scale.map(p.theta),
                y_scale.map(p.se),
                3.0,
                &format!("fill=\"{}\"", study_color(s)),
            );
            j += 1;
        }
    }
    doc.close();
    doc.x_axis(&x_scale, y_scale.range[1], "Effect size (double arcsine)");
    doc.y_axis(&y_scale, LEFT, "Standard error");

    let inside = points.iter().filter(|p| p.inside_light).count();
    let data = FunnelData {
        x_scale,
        y_scale,
        mu,
        t_critical: t,
        heterogeneity: tau2,
        dark_wedge,
        light_wedge,
        fraction_inside_light: inside as f64 / points.len() as f64,
        points,
    };
    Ok(Plot::new(doc.finish(), *spec, data))
}
