use serde::{Deserialize, Serialize};

use super::{population_estimate, SCHEMA_VERSION};
use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::multilevel::{format_p_value, BoundaryFlags, FitResult, ISquared};
use crate::regression::{r_squared, RSquared, RSquaredValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

/// Numbers behind one column of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryColumn {
    pub title: String,
    pub h: usize,
    pub m: usize,
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub sigma2_xi: f64,
    pub sigma2_zeta: f64,
    pub sigma2_eps: f64,
    pub i_squared: Option<ISquared>,
    pub boundary: BoundaryFlags,
    /// Only for a model with features, relative to the intercept-only model.
    pub r_squared: Option<RSquared>,
    pub mu: f64,
    pub se_mu: f64,
    /// Slopes, intercept excluded.
    pub coefficients: Vec<Coefficient>,
    pub p_bar: f64,
    pub lcb: f64,
    pub ucb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub cells: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub schema_version: u32,
    pub alpha: f64,
    pub columns: Vec<SummaryColumn>,
    pub rows: Vec<TableRow>,
}

impl SummaryTable {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Plain-text rendering with aligned columns.
    pub fn to_text(&self) -> String {
        let header: Vec<&str> = std::iter::once("")
            .chain(self.columns.iter().map(|c| c.title.as_str()))
            .collect();
        let ncols = header.len();
        let width = |i: usize| {
            let cells = self.rows.iter().map(|r| {
                if i == 0 {
                    r.label.chars().count()
                } else {
                    r.cells[i - 1].chars().count()
                }
            });
            cells.chain([header[i].chars().count()]).max().unwrap_or(0)
        };
        let widths: Vec<usize> = (0..ncols).map(width).collect();
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (ncols - 1)) + "\n";
        let mut out = rule.clone();
        out.push_str(&line(header.clone()));
        out.push_str(&rule);
        for r in &self.rows {
            out.push_str(&line(
                std::iter::once(r.label.as_str())
                    .chain(r.cells.iter().map(String::as_str))
                    .collect(),
            ));
        }
        out.push_str(&rule);
        out
    }
}

/// Build the comparison table for an intercept-only fit and, optionally, a
/// fit with features on the same data.
pub fn summary_table(
    dataset: &Dataset,
    null: &FitResult,
    with_features: Option<&FitResult>,
    alpha: f64,
) -> Result<SummaryTable> {
    if null.num_coefficients() != 1 {
        return Err(invalid("the first summary column must be the intercept-only model"));
    }
    let mut columns = vec![column("Meta-analysis", dataset, null, None, alpha)?];
    if let Some(fit) = with_features {
        let r2 = r_squared(null, fit)?;
        columns.push(column("Meta-regression", dataset, fit, Some(r2), alpha)?);
    }
    let rows = rows(&columns, alpha);
    Ok(SummaryTable {
        schema_version: SCHEMA_VERSION,
        alpha,
        columns,
        rows,
    })
}

fn column(title: &str, dataset: &Dataset, fit: &FitResult, r2: Option<RSquared>, alpha: f64) -> Result<SummaryColumn> {
    super::check_pairing(fit, dataset)?;
    let se = fit.standard_errors();
    let (_, _, pop) = population_estimate(fit, dataset, alpha)?;
    Ok(SummaryColumn {
        title: title.into(),
        h: fit.num_studies,
        m: fit.num_trials,
        q: fit.q_test.q,
        df: fit.q_test.df,
        p_value: fit.q_test.p_value,
        sigma2_xi: fit.components.sigma2_xi,
        sigma2_zeta: fit.components.sigma2_zeta,
        sigma2_eps: fit.sigma2_eps,
        i_squared: fit.i_squared,
        boundary: fit.boundary,
        r_squared: r2,
        mu: fit.mu,
        se_mu: se[0],
        coefficients: fit
            .column_names()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, name)| Coefficient {
                name: name.clone(),
                estimate: fit.beta[i],
                se: se[i],
            })
            .collect(),
        p_bar: pop.p_bar,
        lcb: pop.lcb,
        ucb: pop.ucb,
    })
}

/// Large or tiny magnitudes as `a.b × 10^k`, everything else with `decimals`.
fn number(x: f64, decimals: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-3..4).contains(&exp) {
        let mut e = exp;
        let mut mant = x / 10f64.powi(e);
        if format!("{:.1}", mant.abs()) == "10.0" {
            e += 1;
            mant = x / 10f64.powi(e);
        }
        format!("{mant:.1} × 10^{e}")
    } else {
        format!("{x:.decimals$}")
    }
}

fn r2_cell(v: &RSquaredValue) -> String {
    match v.value {
        Some(x) if v.truncated => format!("{x:.2} (truncated)"),
        Some(x) => format!("{x:.2}"),
        None => "undefined".into(),
    }
}

fn rows(columns: &[SummaryColumn], alpha: f64) -> Vec<TableRow> {
    let first = &columns[0];
    let each = |f: &dyn Fn(&SummaryColumn) -> String| columns.iter().map(f).collect::<Vec<_>>();
    let share = |c: &SummaryColumn, pick: fn(&ISquared) -> f64, sym: &str| match &c.i_squared {
        Some(i2) => format!(" (I²_{sym} = {})", number(pick(i2), 2)),
        None => String::new(),
    };
    let mut rows = vec![
        TableRow {
            label: "Q".into(),
            cells: each(&|c| {
                let p = format_p_value(c.p_value);
                let p = if p.starts_with('<') { format!("p {p}") } else { format!("p = {p}") };
                format!("{} ({p})", number(c.q, 2))
            }),
        },
        TableRow {
            label: "df".into(),
            cells: each(&|c| c.df.to_string()),
        },
        TableRow {
            label: format!("σ²_ξ (h = {})", first.h),
            cells: each(&|c| format!("{}{}", number(c.sigma2_xi, 4), share(c, |i| i.xi, "ξ"))),
        },
        TableRow {
            label: format!("σ²_ζ (m = {})", first.m),
            cells: each(&|c| format!("{}{}", number(c.sigma2_zeta, 4), share(c, |i| i.zeta, "ζ"))),
        },
        TableRow {
            label: "σ²_ε".into(),
            cells: each(&|c| format!("{}{}", number(c.sigma2_eps, 4), share(c, |i| i.eps, "ε"))),
        },
        TableRow {
            label: "R²_ξ".into(),
            cells: each(&|c| c.r_squared.map(|r| r2_cell(&r.xi)).unwrap_or_default()),
        },
        TableRow {
            label: "R²_ζ".into(),
            cells: each(&|c| c.r_squared.map(|r| r2_cell(&r.zeta)).unwrap_or_default()),
        },
        TableRow {
            label: "μ (SE)".into(),
            cells: each(&|c| format!("{:.4} ({:.4})", c.mu, c.se_mu)),
        },
    ];
    let mut names: Vec<&str> = Vec::new();
    for c in columns {
        for coef in &c.coefficients {
            if !names.contains(&coef.name.as_str()) {
                names.push(&coef.name);
            }
        }
    }
    for name in names {
        rows.push(TableRow {
            label: format!("β({name}) (SE)"),
            cells: each(&|c| {
                c.coefficients
                    .iter()
                    .find(|k| k.name == name)
                    .map(|k| format!("{:.4} ({:.4})", k.estimate, k.se))
                    .unwrap_or_default()
            }),
        });
    }
    let level = format!("{}", ((1.0 - alpha) * 1000.0).round() / 10.0);
    rows.push(TableRow {
        label: format!("p̄ [{level}% CI]"),
        cells: each(&|c| format!("{:.2} [{:.2}, {:.2}]", c.p_bar, c.lcb, c.ucb)),
    });
    rows
}
