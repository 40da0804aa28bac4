//! Trials nested in studies, with study-level feature values.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{da_transform, EffectSize, ProportionOutcome};

/// The literal category used for missing categorical values.
pub const UNKNOWN_LEVEL: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Flag(bool),
    Level(String),
    Missing,
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(x) => Some(*x),
            FeatureValue::Flag(b) => Some(f64::from(u8::from(*b))),
            _ => None,
        }
    }

    /// Text used when the value is written back out or reported in messages.
    pub fn render(&self, missing_token: &str) -> String {
        match self {
            FeatureValue::Number(x) => format!("{x}"),
            FeatureValue::Flag(b) => if *b { "1" } else { "0" }.to_string(),
            FeatureValue::Level(s) => s.clone(),
            FeatureValue::Missing => missing_token.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    pub outcome: ProportionOutcome,
    pub effect: EffectSize,
}

impl Trial {
    pub fn new(id: impl Into<String>, outcome: ProportionOutcome) -> Self {
        Self {
            id: id.into(),
            effect: da_transform(&outcome),
            outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub trials: Vec<Trial>,
    pub features: BTreeMap<String, FeatureValue>,
}

impl Study {
    pub fn new(id: impl Into<String>, trials: Vec<Trial>) -> Self {
        Self {
            id: id.into(),
            trials,
            features: BTreeMap::new(),
        }
    }

    pub fn with_feature(mut self, name: impl Into<String>, value: FeatureValue) -> Self {
        self.features.insert(name.into(), value);
        self
    }

    pub fn feature(&self, name: &str) -> &FeatureValue {
        self.features.get(name).unwrap_or(&FeatureValue::Missing)
    }
}

/// An ordered, validated collection of studies. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    studies: Vec<Study>,
}

impl Dataset {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.len() < 2 {
            return Err(Error::Data(format!(
                "need >= 2 studies, got {}",
                studies.len()
            )));
        }
        let mut seen = HashSet::new();
        for study in &studies {
            if !seen.insert(study.id.as_str()) {
                return Err(Error::Data(format!("duplicate study id '{}'", study.id)));
            }
            if study.trials.is_empty() {
                return Err(Error::Data(format!("study '{}' has no trials", study.id)));
            }
            let mut trial_ids = HashSet::new();
            for trial in &study.trials {
                if !trial_ids.insert(trial.id.as_str()) {
                    return Err(Error::Data(format!(
                        "duplicate trial id '{}' in study '{}'",
                        trial.id, study.id
                    )));
                }
            }
        }
        Ok(Self { studies })
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    /// Number of studies `h`.
    pub fn num_studies(&self) -> usize {
        self.studies.len()
    }

    /// Number of trials `m`.
    pub fn num_trials(&self) -> usize {
        self.studies.iter().map(|s| s.trials.len()).sum()
    }

    pub fn trials(&self) -> impl Iterator<Item = &Trial> {
        self.studies.iter().flat_map(|s| s.trials.iter())
    }

    /// Effect sizes in trial order.
    pub fn thetas(&self) -> Vec<f64> {
        self.trials().map(|t| t.effect.theta).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.trials().map(|t| t.effect.v).collect()
    }

    /// Index of the study owning each trial, in trial order.
    pub fn study_index(&self) -> Vec<usize> {
        self.studies
            .iter()
            .enumerate()
            .flat_map(|(j, s)| std::iter::repeat_n(j, s.trials.len()))
            .collect()
    }

    /// Drop the studies whose ids are listed. Unknown ids are an error.
    pub fn without_studies(&self, excluded: &[String]) -> Result<Self> {
        for id in excluded {
            if !self.studies.iter().any(|s| &s.id == id) {
                return Err(Error::Data(format!("cannot exclude unknown study '{id}'")));
            }
        }
        Dataset::new(
            self.studies
                .iter()
                .filter(|s| !excluded.contains(&s.id))
                .cloned()
                .collect(),
        )
    }

    /// Keep only the trials at the given global positions (sorted, trial order).
    /// Studies left without trials disappear.
    pub fn subset_trials(&self, keep: &[usize]) -> Result<Self> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        let mut next = keep.iter().peekable();
        let mut offset = 0;
        let mut studies = Vec::new();
        for study in &self.studies {
            let mut trials = Vec::new();
            for (i, trial) in study.trials.iter().enumerate() {
                if next.peek() == Some(&&(offset + i)) {
                    trials.push(trial.clone());
                    next.next();
                }
            }
            offset += study.trials.len();
            if !trials.is_empty() {
                studies.push(Study {
                    id: study.id.clone(),
                    trials,
                    features: study.features.clone(),
                });
            }
        }
        Dataset::new(studies)
    }
}
