use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue, UNKNOWN_LEVEL};
use crate::design::{ColumnGroup, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Binary,
    Categorical {
        levels: Vec<String>,
        /// Explicit reference level. Defaults to the most frequent level.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
    },
}

/// Declaration of one study-level feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Binary,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
                reference: None,
            },
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric)
    }

    pub fn validate(&self) -> Result<()> {
        if let FeatureKind::Categorical { levels, reference } = &self.kind {
            let mut distinct = levels.clone();
            distinct.sort();
            distinct.dedup();
            if distinct.len() != levels.len() {
                return Err(Error::Data(format!(
                    "feature '{}' declares duplicate levels",
                    self.name
                )));
            }
            if levels.len() < 2 {
                return Err(Error::Data(format!(
                    "categorical feature '{}' needs at least 2 levels",
                    self.name
                )));
            }
            if let Some(r) = reference {
                if !levels.contains(r) && r != UNKNOWN_LEVEL {
                    return Err(Error::Data(format!(
                        "reference level '{r}' of '{}' is not a declared level",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Dummy-code the selected features into a trial-aligned design matrix.
///
/// Categorical features get one column per observed non-reference level;
/// numeric features pass through; binary features become 0/1. Columns appear
/// in the order of `selected`.
pub fn encode_features(dataset: &Dataset, specs: &[FeatureSpec], selected: &[String]) -> Result<FeatureMatrix> {
    let fm = encode_unchecked(dataset, specs, selected)?;
    fm.check_full_rank()?;
    Ok(fm)
}

/// [`encode_features`] without the rank check, for callers that resolve
/// aliasing themselves.
pub(crate) fn encode_unchecked(dataset: &Dataset, specs: &[FeatureSpec], selected: &[String]) -> Result<FeatureMatrix> {
    let m = dataset.num_trials();
    let mut names = vec!["intercept".to_string()];
    let mut groups = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; m]];

    for name in selected {
        let spec = specs
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::Data(format!("feature '{name}' is not declared")))?;
        spec.validate()?;
        if groups.iter().any(|g: &ColumnGroup| &g.feature == name) {
            return Err(Error::Data(format!("feature '{name}' selected twice")));
        }
        let start = columns.len();
        match &spec.kind {
            FeatureKind::Numeric | FeatureKind::Binary => {
                let mut col = Vec::with_capacity(m);
                for study in dataset.studies() {
                    let value = numeric_value(spec, study.feature(name), &study.id)?;
                    col.extend(std::iter::repeat_n(value, study.trials.len()));
                }
                names.push(name.clone());
                columns.push(col);
            }
            FeatureKind::Categorical { levels, reference } => {
                let per_study: Vec<String> = dataset
                    .studies()
                    .iter()
                    .map(|s| category_value(spec, levels, s.feature(name), &s.id))
                    .collect::<Result<_>>()?;
                let reference = match reference {
                    Some(r) => r.clone(),
                    None => most_frequent_level(dataset, &per_study),
                };
                let mut observed: Vec<&String> = levels
                    .iter()
                    .filter(|l| per_study.contains(l))
                    .collect();
                let unknown = UNKNOWN_LEVEL.to_string();
                if !levels.contains(&unknown) && per_study.contains(&unknown) {
                    observed.push(&unknown);
                }
                for level in observed.into_iter().filter(|l| **l != reference) {
                    let mut col = Vec::with_capacity(m);
                    for (study, value) in dataset.studies().iter().zip(&per_study) {
                        let indicator = if value == level { 1.0 } else { 0.0 };
                        col.extend(std::iter::repeat_n(indicator, study.trials.len()));
                    }
                    names.push(format!("{name}[{level}]"));
                    columns.push(col);
                }
            }
        }
        if columns.len() > start {
            groups.push(ColumnGroup {
                feature: name.clone(),
                columns: start..columns.len(),
            });
        }
    }

    let p = columns.len();
    let matrix = DMatrix::from_fn(m, p, |r, c| columns[c][r]);
    FeatureMatrix::new(names, groups, matrix)
}

fn numeric_value(spec: &FeatureSpec, value: &FeatureValue, study: &str) -> Result<f64> {
    let name = &spec.name;
    match (&spec.kind, value) {
        (_, FeatureValue::Missing) => Err(Error::Data(format!(
            "missing value for numeric feature '{name}' in study '{study}'"
        ))),
        (FeatureKind::Binary, FeatureValue::Flag(b)) => Ok(f64::from(u8::from(*b))),
        (FeatureKind::Binary, FeatureValue::Number(x)) if *x == 0.0 || *x == 1.0 => Ok(*x),
        (FeatureKind::Numeric, FeatureValue::Number(x)) if x.is_finite() => Ok(*x),
        (_, other) => Err(Error::Data(format!(
            "feature '{name}' in study '{study}' has non-{} value '{}'",
            if spec.is_numeric() { "numeric" } else { "binary" },
            other.render("")
        ))),
    }
}

fn category_value(spec: &FeatureSpec, levels: &[String], value: &FeatureValue, study: &str) -> Result<String> {
    let label = match value {
        FeatureValue::Missing => UNKNOWN_LEVEL.to_string(),
        other => other.render(UNKNOWN_LEVEL),
    };
    if label != UNKNOWN_LEVEL && !levels.contains(&label) {
        return Err(Error::Data(format!(
            "unseen category '{label}' for feature '{}' in study '{study}'",
            spec.name
        )));
    }
    Ok(label)
}

/// Level covering the most trials; ties go to the alphabetically first level.
fn most_frequent_level(dataset: &Dataset, per_study: &[String]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (study, level) in dataset.studies().iter().zip(per_study) {
        *counts.entry(level.as_str()).or_default() += study.trials.len();
    }
    let mut best: Option<(&str, usize)> = None;
    for (level, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((level, count));
        }
    }
    best.map(|(l, _)| l.to_string()).unwrap_or_default()
}
