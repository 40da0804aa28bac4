use serde::{Deserialize, Serialize};

use super::svg::{nice_domain, AxisScale, SvgDoc};
use super::{Plot, PlotKind, PlotSpec};
use crate::error::Result;
use crate::regression::{Criterion, ModelScore, SelectionPath};

/// One evaluated model. `step` is `None` for the intercept-only model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub label: String,
    pub features: Vec<String>,
    pub step: Option<usize>,
    pub aic: f64,
    pub bic: f64,
    pub rmse: f64,
    /// The model is on the accepted path.
    pub accepted: bool,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPanel {
    pub criterion: Criterion,
    pub x_scale: AxisScale,
    pub null_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFailure {
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionData {
    /// Rows are sorted by this criterion, best on top.
    pub sort_by: Criterion,
    pub panels: Vec<SelectionPanel>,
    pub rows: Vec<SelectionRow>,
    pub failures: Vec<SelectionFailure>,
}

const LABEL_WIDTH: f64 = 230.0;
const GAP: f64 = 24.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const CRITERIA: [Criterion; 3] = [Criterion::Aic, Criterion::Bic, Criterion::Rmse];

fn label(features: &[String]) -> String {
    if features.is_empty() {
        "null (intercept only)".into()
    } else {
        features.join(" + ")
    }
}

/// Every model visited by forward selection, one panel per criterion.
pub fn selection_plot(path: &SelectionPath, spec: &PlotSpec) -> Result<Plot<SelectionData>> {
    spec.validate(PlotKind::Selection)?;
    let lik = path.options.likelihood;
    let row_for = |score: &ModelScore, step: Option<usize>, accepted: bool| SelectionRow {
        label: label(&score.features),
        features: score.features.clone(),
        step,
        aic: score.criteria.value(Criterion::Aic, lik),
        bic: score.criteria.value(Criterion::Bic, lik),
        rmse: score.criteria.rmse,
        accepted,
        y: 0.0,
    };

    let mut rows = vec![row_for(&path.null, None, true)];
    let mut failures = Vec::new();
    for (s, step) in path.steps.iter().enumerate() {
        for cand in &step.candidates {
            match (&cand.score, &cand.failure) {
                (Some(score), _) => {
                    let accepted = step.accepted && step.best.as_deref() == Some(cand.feature.as_str());
                    rows.push(row_for(score, Some(s), accepted));
                }
                (None, reason) => {
                    let mut features = step.base.clone();
                    features.push(cand.feature.clone());
                    failures.push(SelectionFailure {
                        label: label(&features),
                        reason: reason.clone().unwrap_or_default(),
                    });
                }
            }
        }
    }
    let metric = |r: &SelectionRow, c: Criterion| match c {
        Criterion::Aic => r.aic,
        Criterion::Bic => r.bic,
        Criterion::Rmse => r.rmse,
    };
    let sort_by = path.options.criterion;
    rows.sort_by(|a, b| metric(a, sort_by).total_cmp(&metric(b, sort_by)).then(a.label.cmp(&b.label)));

    let pitch = (spec.height - TOP - BOTTOM) / rows.len() as f64;
    for (i, r) in rows.iter_mut().enumerate() {
        r.y = TOP + pitch * (i as f64 + 0.5);
    }
    let panel_width = (spec.width - LABEL_WIDTH - RIGHT - 2.0 * GAP) / 3.0;
    let null_row = rows.iter().find(|r| r.step.is_none()).expect("null row").clone();
    let panels: Vec<SelectionPanel> = CRITERIA
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let lo = rows.iter().map(|r| metric(r, c)).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| metric(r, c)).fold(f64::NEG_INFINITY, f64::max);
            let x0 = LABEL_WIDTH + k as f64 * (panel_width + GAP);
            SelectionPanel {
                criterion: c,
                x_scale: AxisScale::new(nice_domain(lo, hi, 4), [x0, x0 + panel_width]),
                null_value: metric(&null_row, c),
            }
        })
        .collect();

    let bottom = spec.height - BOTTOM;
    let mut doc = SvgDoc::new(spec.width, spec.height);
    for r in &rows {
        let weight = if r.accepted { " font-weight=\"bold\"" } else { "" };
        doc.text_attrs(LABEL_WIDTH - 8.0, r.y + 4.0, &format!("text-anchor=\"end\"{weight}"), &r.label);
    }
    for panel in &panels {
        let s = &panel.x_scale;
        doc.rect(s.range[0], TOP, s.range[1] - s.range[0], bottom - TOP, "fill=\"#f5f5f5\"");
        doc.text_attrs(
            (s.range[0] + s.range[1]) / 2.0,
            TOP - 10.0,
            "text-anchor=\"middle\" font-weight=\"bold\"",
            &panel.criterion.to_string(),
        );
        let nx = s.map(panel.null_value);
        doc.line(nx, TOP, nx, bottom, "class=\"null-line\" stroke=\"#555555\" stroke-dasharray=\"4 3\"");
        doc.open(&format!("class=\"panel-{}\"", panel.criterion.to_string().to_lowercase()));
        for r in &rows {
            let fill = if r.accepted { "#000000" } else { "#ffffff" };
            doc.circle(
                s.map(metric(r, panel.criterion)),
                r.y,
                3.5,
                &format!("fill=\"{fill}\" stroke=\"#000000\""),
            );
        }
        doc.close();
        doc.x_axis(s, bottom, &panel.criterion.to_string());
    }

    let data = SelectionData {
        sort_by,
        panels,
        rows,
        failures,
    };
    Ok(Plot::new(doc.finish(), *spec, data))
}
