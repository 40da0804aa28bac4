use serde::{Deserialize, Serialize};

use super::svg::{nice_domain, AxisScale, SvgDoc};
use super::{Plot, PlotKind, PlotSpec};
use crate::error::{invalid, Result};
use crate::regression::PfiReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub mean: f64,
    pub p2_5: f64,
    pub p25: f64,
    pub p75: f64,
    pub p97_5: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceData {
    pub x_scale: AxisScale,
    /// Sorted by mean PFI, largest first.
    pub rows: Vec<ImportanceRow>,
    pub replicates_per_feature: usize,
}

const LABEL_WIDTH: f64 = 170.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Mean PFI with 25–75 (dark) and 2.5–97.5 (light) percentile bars.
pub fn importance_plot(report: &PfiReport, spec: &PlotSpec) -> Result<Plot<ImportanceData>> {
    spec.validate(PlotKind::Importance)?;
    if report.features.is_empty() {
        return Err(invalid("importance report has no features"));
    }
    let mut rows: Vec<ImportanceRow> = report
        .features
        .iter()
        .map(|f| ImportanceRow {
            feature: f.feature.clone(),
            mean: f.mean,
            p2_5: f.p2_5,
            p25: f.p25,
            p75: f.p75,
            p97_5: f.p97_5,
            y: 0.0,
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.feature.cmp(&b.feature)));
    let pitch = (spec.height - TOP - BOTTOM) / rows.len() as f64;
    for (i, r) in rows.iter_mut().enumerate() {
        r.y = TOP + pitch * (i as f64 + 0.5);
    }
    let lo = rows.iter().map(|r| r.p2_5).fold(1.0, f64::min);
    let hi = rows.iter().map(|r| r.p97_5).fold(1.0, f64::max);
    let x_scale = AxisScale::new(nice_domain(lo, hi, 6), [LABEL_WIDTH, spec.width - RIGHT]);
    let bottom = spec.height - BOTTOM;
    let bar = (pitch * 0.5).min(12.0);

    let mut doc = SvgDoc::new(spec.width, spec.height);
    let one = x_scale.map(1.0);
    doc.line(one, TOP, one, bottom, "class=\"no-effect\" stroke=\"#000000\"");
    for r in &rows {
        let span = |a: f64, b: f64| (x_scale.map(a), x_scale.map(b) - x_scale.map(a));
        let (x, w) = span(r.p2_5, r.p97_5);
        doc.rect(x, r.y - bar / 2.0, w, bar, "class=\"outer\" fill=\"#d9d9d9\"");
        let (x, w) = span(r.p25, r.p75);
        doc.rect(x, r.y - bar / 2.0, w, bar, "class=\"inner\" fill=\"#969696\"");
        doc.circle(x_scale.map(r.mean), r.y, 3.5, "class=\"mean\" fill=\"#000000\"");
        doc.text(LABEL_WIDTH - 8.0, r.y + 4.0, "end", &r.feature);
    }
    doc.x_axis(&x_scale, bottom, "Permutation feature importance");

    let data = ImportanceData {
        x_scale,
        rows,
        replicates_per_feature: report.options.folds * report.options.permutations,
    };
    Ok(Plot::new(doc.finish(), *spec, data))
}
