//! Greedy forward selection of study-level features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::criteria::{criteria_for, Criterion, InformationCriteria};
use super::features::{encode_features, FeatureSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::multilevel::{reml_fit, Likelihood};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub criterion: Criterion,
    /// Likelihood behind AIC/BIC. ML is the default because REML likelihoods
    /// of different fixed-effect structures are not comparable.
    pub likelihood: Likelihood,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            criterion: Criterion::Aic,
            likelihood: Likelihood::Ml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub features: Vec<String>,
    pub columns: usize,
    pub criteria: InformationCriteria,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub feature: String,
    pub columns_added: usize,
    pub score: Option<ModelScore>,
    /// Why the candidate could not be fitted.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub base: Vec<String>,
    /// Criterion value of the model being extended.
    pub base_value: f64,
    pub candidates: Vec<CandidateOutcome>,
    pub best: Option<String>,
    pub best_value: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPath {
    pub options: SelectionOptions,
    pub null: ModelScore,
    pub steps: Vec<SelectionStep>,
    pub selected: Vec<String>,
}

impl SelectionPath {
    /// Criterion values of the null model followed by every accepted step.
    pub fn accepted_values(&self) -> Vec<f64> {
        let mut out = vec![self.null.criteria.value(self.options.criterion, self.options.likelihood)];
        out.extend(
            self.steps
                .iter()
                .filter(|s| s.accepted)
                .filter_map(|s| s.best_value),
        );
        out
    }
}

pub fn score_model(dataset: &Dataset, specs: &[FeatureSpec], features: &[String]) -> Result<ModelScore> {
    let x = encode_features(dataset, specs, features)?;
    let reml = reml_fit(dataset, &x)?;
    Ok(ModelScore {
        features: features.to_vec(),
        columns: x.ncols(),
        criteria: criteria_for(dataset, &x, &reml)?,
    })
}

/// Add one feature at a time while the active criterion strictly decreases.
///
/// Candidates are scored concurrently but reduced in name order; ties go to
/// fewer added columns, then to the alphabetically first name.
pub fn forward_select(dataset: &Dataset, specs: &[FeatureSpec], options: SelectionOptions) -> Result<SelectionPath> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument(
            "forward selection needs at least one candidate feature".into(),
        ));
    }
    let value = |s: &ModelScore| s.criteria.value(options.criterion, options.likelihood);

    let null = score_model(dataset, specs, &[])?;
    let mut current: Vec<String> = Vec::new();
    let mut current_value = value(&null);
    let mut current_columns = null.columns;
    let mut remaining: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    remaining.sort();
    remaining.dedup();
    let mut steps = Vec::new();

    while !remaining.is_empty() {
        let candidates: Vec<CandidateOutcome> = remaining
            .par_iter()
            .map(|feature| {
                let mut features = current.clone();
                features.push(feature.clone());
                match score_model(dataset, specs, &features) {
                    Ok(score) => CandidateOutcome {
                        feature: feature.clone(),
                        columns_added: score.columns - current_columns,
                        score: Some(score),
                        failure: None,
                    },
                    Err(e) => CandidateOutcome {
                        feature: feature.clone(),
                        columns_added: 0,
                        score: None,
                        failure: Some(e.to_string()),
                    },
                }
            })
            .collect();

        let best = candidates
            .iter()
            .filter_map(|c| c.score.as_ref().map(|s| (c, value(s))))
            .min_by(|(a, va), (b, vb)| {
                va.total_cmp(vb)
                    .then(a.columns_added.cmp(&b.columns_added))
                    .then(a.feature.cmp(&b.feature))
            })
            .map(|(c, v)| (c.feature.clone(), c.columns_added, v));

        let accepted = matches!(best, Some((_, _, v)) if v < current_value);
        steps.push(SelectionStep {
            base: current.clone(),
            base_value: current_value,
            candidates,
            best: best.as_ref().map(|b| b.0.clone()),
            best_value: best.as_ref().map(|b| b.2),
            accepted,
        });
        match best {
            Some((feature, added, v)) if accepted => {
                remaining.retain(|f| f != &feature);
                current.push(feature);
                current_value = v;
                current_columns += added;
            }
            _ => break,
        }
    }

    Ok(SelectionPath {
        options,
        null,
        steps,
        selected: current,
    })
}
