use serde::{Deserialize, Serialize};

use super::svg::{nice_domain, AxisScale, SvgDoc};
use super::{check_pairing, population_estimate, study_estimate, AxisPolicy, Plot, PlotKind, PlotSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::multilevel::FitResult;

/// One line of a forest plot; `estimate`, `lcb` and `ucb` are proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    pub trials: usize,
    /// Estimate on the DA scale and its variance.
    pub kappa: f64,
    pub variance: f64,
    pub estimate: f64,
    pub lcb: f64,
    pub ucb: f64,
    /// Pixel row centre.
    pub y: f64,
    /// Side of the square, or half-height of the diamond for the population row.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestData {
    pub x_scale: AxisScale,
    pub rows: Vec<ForestRow>,
    pub population: ForestRow,
}

const LABEL_WIDTH: f64 = 170.0;
const VALUE_WIDTH: f64 = 170.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;

/// Study-level estimates with intervals and the pooled estimate below them.
pub fn forest_plot(fit: &FitResult, dataset: &Dataset, spec: &PlotSpec) -> Result<Plot<ForestData>> {
    spec.validate(PlotKind::Forest)?;
    check_pairing(fit, dataset)?;
    let alpha = spec.alpha();
    let h = fit.num_studies;
    let slots = (h + 2) as f64;
    let pitch = (spec.height - TOP - BOTTOM) / slots;
    let max_trials = fit.study_effects.iter().map(|e| e.trials).max().unwrap_or(1) as f64;
    let max_side = (pitch * 0.8).min(14.0);

    let mut rows = Vec::with_capacity(h);
    for (j, effect) in fit.study_effects.iter().enumerate() {
        let est = study_estimate(effect, dataset, h, alpha)?;
        rows.push(ForestRow {
            label: effect.study.clone(),
            trials: effect.trials,
            kappa: effect.kappa,
            variance: effect.variance,
            estimate: est.p_bar,
            lcb: est.lcb,
            ucb: est.ucb,
            y: TOP + pitch * (j as f64 + 0.5),
            size: max_side * (effect.trials as f64 / max_trials).sqrt(),
        });
    }
    let (pop_kappa, pop_var, pop) = population_estimate(fit, dataset, alpha)?;
    let population = ForestRow {
        label: "Population".into(),
        trials: fit.num_trials,
        kappa: pop_kappa,
        variance: pop_var,
        estimate: pop.p_bar,
        lcb: pop.lcb,
        ucb: pop.ucb,
        y: TOP + pitch * (slots - 0.5),
        size: (pitch * 0.4).min(8.0),
    };

    let domain = match spec.axis {
        AxisPolicy::Unit => [0.0, 1.0],
        AxisPolicy::Data => {
            let lo = rows.iter().chain([&population]).map(|r| r.lcb).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().chain([&population]).map(|r| r.ucb).fold(f64::NEG_INFINITY, f64::max);
            let d = nice_domain(lo, hi, 5);
            [d[0].max(0.0), d[1].min(1.0)]
        }
    };
    let x_scale = AxisScale::new(domain, [LABEL_WIDTH, spec.width - VALUE_WIDTH]);
    let bottom = spec.height - BOTTOM;

    let mut doc = SvgDoc::new(spec.width, spec.height);
    doc.text_attrs(10.0, 20.0, "font-weight=\"bold\"", "Study (trials)");
    doc.text_attrs(spec.width - 10.0, 20.0, "text-anchor=\"end\" font-weight=\"bold\"", "Estimate [CI]");
    let px = x_scale.map(population.estimate);
    doc.line(px, TOP, px, bottom, "class=\"population-line\" stroke=\"#555555\" stroke-dasharray=\"4 3\"");

    doc.open("class=\"studies\"");
    for row in &rows {
        let x = x_scale.map(row.estimate);
        doc.line(x_scale.map(row.lcb), row.y, x_scale.map(row.ucb), row.y, "stroke=\"#000000\"");
        doc.rect(
            x - row.size / 2.0,
            row.y - row.size / 2.0,
            row.size,
            row.size,
            "class=\"study\" fill=\"#000000\"",
        );
        doc.text(10.0, row.y + 4.0, "start", &format!("{} ({})", row.label, row.trials));
        doc.text(spec.width - 10.0, row.y + 4.0, "end", &interval_text(row));
    }
    doc.close();

    let (y, d) = (population.y, population.size);
    doc.polygon(
        &[
            (x_scale.map(population.lcb), y),
            (px, y - d),
            (x_scale.map(population.ucb), y),
            (px, y + d),
        ],
        "class=\"population\" fill=\"#000000\"",
    );
    doc.text_attrs(10.0, y + 4.0, "font-weight=\"bold\"", "Population");
    doc.text_attrs(spec.width - 10.0, y + 4.0, "text-anchor=\"end\" font-weight=\"bold\"", &interval_text(&population));
    doc.x_axis(&x_scale, bottom, "Overall accuracy");

    let data = ForestData {
        x_scale,
        rows,
        population,
    };
    Ok(Plot::new(doc.finish(), *spec, data))
}

fn interval_text(row: &ForestRow) -> String {
    format!("{:.2} [{:.2}, {:.2}]", row.estimate, row.lcb, row.ucb)
}
