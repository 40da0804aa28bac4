//! Delimited-file ingestion with a declarative feature schema.
//!
//! Input files have a header row with the reserved columns `study_id`,
//! `trial_id`, `n` and either `k` or `p`, plus one column per feature. The
//! schema is TOML:
//!
//! ```toml
//! delimiter = ","
//! missing = "NA"
//! ignore = ["notes"]
//!
//! [[features]]
//! name = "sdg"
//! kind = "categorical"
//! levels = ["2", "11", "15"]
//!
//! [[features]]
//! name = "maxprev"
//! kind = "numeric"
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue, Study, Trial, UNKNOWN_LEVEL};
use crate::error::{Error, Result};
use crate::regression::{FeatureKind, FeatureSpec};
use crate::transforms::ProportionOutcome;

const RESERVED: [&str; 5] = ["study_id", "trial_id", "k", "n", "p"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_missing")]
    pub missing: String,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default)]
    pub features: Vec<FeatureSpec>,
}

fn default_delimiter() -> String {
    ",".into()
}

fn default_missing() -> String {
    "NA".into()
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            delimiter: default_delimiter(),
            missing: default_missing(),
            ignore: Vec::new(),
            features: Vec::new(),
        }
    }
}

impl SchemaConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: SchemaConfig = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes to TOML")
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_bytes() {
            [b] => Ok(*b),
            _ => Err(Error::Data(format!(
                "delimiter must be a single ASCII character, got '{}'",
                self.delimiter
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        self.delimiter_byte()?;
        let mut names: Vec<&str> = Vec::new();
        for f in &self.features {
            if RESERVED.contains(&f.name.as_str()) {
                return Err(Error::Data(format!("feature name '{}' is reserved", f.name)));
            }
            if names.contains(&f.name.as_str()) {
                return Err(Error::Data(format!("feature '{}' declared twice", f.name)));
            }
            names.push(&f.name);
            f.validate()?;
        }
        Ok(())
    }

    fn is_missing(&self, raw: &str) -> bool {
        raw.is_empty() || raw == self.missing
    }

    fn parse_value(&self, spec: &FeatureSpec, raw: &str, line: u64) -> Result<FeatureValue> {
        let raw = raw.trim();
        if self.is_missing(raw) {
            return Ok(FeatureValue::Missing);
        }
        let parse_err = |what: &str| Error::Parse {
            line,
            message: format!("feature '{}': {what} '{raw}'", spec.name),
        };
        match &spec.kind {
            FeatureKind::Numeric => raw
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(FeatureValue::Number)
                .ok_or_else(|| parse_err("not a finite number")),
            FeatureKind::Binary => match raw.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => Ok(FeatureValue::Flag(true)),
                "0" | "false" | "no" => Ok(FeatureValue::Flag(false)),
                _ => Err(parse_err("not a binary value")),
            },
            FeatureKind::Categorical { levels, .. } => {
                if raw == UNKNOWN_LEVEL || levels.iter().any(|l| l == raw) {
                    Ok(FeatureValue::Level(raw.to_string()))
                } else {
                    Err(parse_err("undeclared category"))
                }
            }
        }
    }
}

/// Load a dataset from a delimited file.
pub fn load_dataset(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Data(format!("cannot open {}: {e}", path.as_ref().display()))
    })?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &SchemaConfig) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| headers.iter().position(|h| h == name);

    for h in &headers {
        if !RESERVED.contains(&h.as_str())
            && schema.feature(h).is_none()
            && !schema.ignore.contains(h)
        {
            return Err(Error::Parse {
                line: 1,
                message: format!("column '{h}' is neither a declared feature nor ignored"),
            });
        }
    }
    let study_col = col("study_id").ok_or_else(|| header_missing("study_id"))?;
    let trial_col = col("trial_id").ok_or_else(|| header_missing("trial_id"))?;
    let n_col = col("n").ok_or_else(|| header_missing("n"))?;
    let k_col = col("k");
    let p_col = col("p");
    if k_col.is_none() && p_col.is_none() {
        return Err(header_missing("k or p"));
    }
    let feature_cols: Vec<(usize, &FeatureSpec)> = schema
        .features
        .iter()
        .filter_map(|f| col(&f.name).map(|c| (c, f)))
        .collect();

    struct Pending {
        trials: Vec<Trial>,
        features: BTreeMap<String, FeatureValue>,
        first_line: u64,
    }
    let mut order: Vec<String> = Vec::new();
    let mut studies: HashMap<String, Pending> = HashMap::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let study_id = field(study_col).to_string();
        let trial_id = field(trial_col).to_string();
        if study_id.is_empty() || trial_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty study_id or trial_id".into(),
            });
        }

        let n: u64 = field(n_col).parse().map_err(|_| Error::Parse {
            line,
            message: format!("n must be a positive integer, got '{}'", field(n_col)),
        })?;
        let k = resolve_k(k_col.map(field), p_col.map(field), n, line, schema)?;
        let outcome = ProportionOutcome::new(k, n).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;

        let mut values = BTreeMap::new();
        for (c, spec) in &feature_cols {
            values.insert(spec.name.clone(), schema.parse_value(spec, field(*c), line)?);
        }

        let pending = studies.entry(study_id.clone()).or_insert_with(|| {
            order.push(study_id.clone());
            Pending {
                trials: Vec::new(),
                features: values.clone(),
                first_line: line,
            }
        });
        for (name, value) in &values {
            let existing = &pending.features[name];
            if existing != value {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "study '{study_id}' has inconsistent values for feature '{name}': '{}' (line {}) vs '{}'",
                        existing.render(&schema.missing),
                        pending.first_line,
                        value.render(&schema.missing)
                    ),
                });
            }
        }
        if pending.trials.iter().any(|t| t.id == trial_id) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate trial '{trial_id}' in study '{study_id}'"),
            });
        }
        pending.trials.push(Trial::new(trial_id, outcome));
    }

    let studies = order
        .into_iter()
        .map(|id| {
            let p = studies.remove(&id).expect("pending study");
            Study {
                id,
                trials: p.trials,
                features: p.features,
            }
        })
        .collect();
    Dataset::new(studies)
}

fn header_missing(name: &str) -> Error {
    Error::Parse {
        line: 1,
        message: format!("missing required column '{name}'"),
    }
}

fn resolve_k(k: Option<&str>, p: Option<&str>, n: u64, line: u64, schema: &SchemaConfig) -> Result<u64> {
    if let Some(raw) = k.filter(|r| !schema.is_missing(r)) {
        return raw.parse().map_err(|_| Error::Parse {
            line,
            message: format!("k must be a non-negative integer, got '{raw}'"),
        });
    }
    let raw = p
        .filter(|r| !schema.is_missing(r))
        .ok_or_else(|| Error::Parse {
            line,
            message: "neither k nor p is given".into(),
        })?;
    let p: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("p must be a number, got '{raw}'"),
    })?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parse {
            line,
            message: format!("p must lie in [0, 1], got {p}"),
        });
    }
    let exact = p * n as f64;
    let k = exact.round();
    if (exact - k).abs() > 0.5 {
        return Err(Error::Parse {
            line,
            message: format!("p = {p} with n = {n} does not correspond to an integer count"),
        });
    }
    Ok(k as u64)
}

/// Write a dataset in the format [`read_dataset`] accepts, with `k` counts.
pub fn write_dataset<W: Write>(dataset: &Dataset, schema: &SchemaConfig, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .from_writer(writer);
    let mut header = vec!["study_id".to_string(), "trial_id".into(), "k".into(), "n".into()];
    header.extend(schema.features.iter().map(|f| f.name.clone()));
    wtr.write_record(&header)?;
    for study in dataset.studies() {
        for trial in &study.trials {
            let mut row = vec![
                study.id.clone(),
                trial.id.clone(),
                trial.outcome.k().to_string(),
                trial.outcome.n().to_string(),
            ];
            row.extend(
                schema
                    .features
                    .iter()
                    .map(|f| study.feature(&f.name).render(&schema.missing)),
            );
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
