//! Synthetic three-level datasets with known parameters.
//!
//! Each study draws its feature values, a study effect `ξ_j ~ N(0, σ²_ξ)` and
//! a trial count; each trial draws a test-set size, a trial effect
//! `ζ_ij ~ N(0, σ²_ζ)`, and finally `k ~ Binomial(n, p)` where `p` is the
//! Miller inverse of the linear predictor at that trial's `n`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue, Study, Trial};
use crate::error::{Error, Result};
use crate::io::SchemaConfig;
use crate::regression::FeatureSpec;
use crate::transforms::{da_inverse, da_transform, ProportionOutcome};

/// Redraws of `ζ` allowed per trial before giving up.
pub const MAX_REDRAWS: usize = 1000;

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u64,
    pub max: u64,
}

impl CountRange {
    pub fn fixed(n: u64) -> Self {
        Self { min: n, max: n }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase")]
pub enum FeatureDistribution {
    Uniform { min: f64, max: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

/// A study-level feature and its true coefficient on the DA scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedFeature {
    pub name: String,
    #[serde(flatten)]
    pub distribution: FeatureDistribution,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub studies: usize,
    pub trials_per_study: CountRange,
    pub sample_size: CountRange,
    pub mu: f64,
    pub sigma2_xi: f64,
    pub sigma2_zeta: f64,
    #[serde(default)]
    pub features: Vec<SimulatedFeature>,
    pub seed: u64,
}

impl SimulationConfig {
    /// Schema describing the simulated features, for reading the data back.
    pub fn schema(&self) -> SchemaConfig {
        SchemaConfig {
            features: self
                .features
                .iter()
                .map(|f| match f.distribution {
                    FeatureDistribution::Bernoulli { .. } => FeatureSpec::binary(&f.name),
                    _ => FeatureSpec::numeric(&f.name),
                })
                .collect(),
            ..SchemaConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Simulation(msg));
        if self.studies < 2 {
            return fail(format!("need >= 2 studies, got {}", self.studies));
        }
        for (what, r) in [("trials_per_study", self.trials_per_study), ("sample_size", self.sample_size)] {
            if r.min == 0 || r.min > r.max {
                return fail(format!("{what} range [{}, {}] is empty or starts at 0", r.min, r.max));
            }
        }
        if !self.mu.is_finite() {
            return fail("mu must be finite".into());
        }
        for (what, s) in [("sigma2_xi", self.sigma2_xi), ("sigma2_zeta", self.sigma2_zeta)] {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("{what} must be finite and >= 0, got {s}"));
            }
        }
        for f in &self.features {
            let ok = match f.distribution {
                FeatureDistribution::Uniform { min, max } => min <= max && min.is_finite() && max.is_finite(),
                FeatureDistribution::Normal { mean, sd } => mean.is_finite() && sd >= 0.0 && sd.is_finite(),
                FeatureDistribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            };
            if !ok || !f.effect.is_finite() {
                return fail(format!("feature '{}' has invalid parameters", f.name));
            }
        }
        Ok(())
    }
}

/// Latent draws behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SimulationConfig,
    /// `ξ_j` per study id.
    pub study_effects: BTreeMap<String, f64>,
    /// Linear predictor `θ_ij` per trial, in dataset order.
    pub trial_thetas: Vec<f64>,
    /// Trials whose `ζ` had to be redrawn to keep `θ` invertible.
    pub redraws: usize,
}

pub fn simulate_dataset(config: &SimulationConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let xi = Normal::new(0.0, config.sigma2_xi.sqrt()).expect("validated sd");
    let zeta = Normal::new(0.0, config.sigma2_zeta.sqrt()).expect("validated sd");
    let width = config.studies.to_string().len();

    let mut studies = Vec::with_capacity(config.studies);
    let mut study_effects = BTreeMap::new();
    let mut trial_thetas = Vec::new();
    let mut redraws = 0;

    for j in 0..config.studies {
        let id = format!("S{:0width$}", j + 1);
        let mut shift = config.mu;
        let mut features = BTreeMap::new();
        for f in &config.features {
            let value = match f.distribution {
                FeatureDistribution::Uniform { min, max } => FeatureValue::Number(if min < max {
                    rng.random_range(min..max)
                } else {
                    min
                }),
                FeatureDistribution::Normal { mean, sd } => {
                    FeatureValue::Number(Normal::new(mean, sd).expect("validated sd").sample(&mut rng))
                }
                FeatureDistribution::Bernoulli { p } => FeatureValue::Flag(rng.random_bool(p)),
            };
            shift += f.effect * value.as_number().expect("simulated values are numeric");
            features.insert(f.name.clone(), value);
        }
        let xi_j = xi.sample(&mut rng);
        study_effects.insert(id.clone(), xi_j);

        let m_j = config.trials_per_study.draw(&mut rng);
        let mut trials = Vec::with_capacity(m_j as usize);
        for i in 0..m_j {
            let n = config.sample_size.draw(&mut rng);
            let lo = da_transform(&ProportionOutcome::new(0, n)?).theta;
            let hi = da_transform(&ProportionOutcome::new(n, n)?).theta;
            let mut theta = shift + xi_j + zeta.sample(&mut rng);
            let mut attempts = 0;
            while !(lo..=hi).contains(&theta) {
                if attempts == MAX_REDRAWS {
                    return Err(Error::Simulation(format!(
                        "study {id}, trial {}: linear predictor stays outside [{lo:.4}, {hi:.4}] after {MAX_REDRAWS} redraws",
                        i + 1
                    )));
                }
                attempts += 1;
                theta = shift + xi_j + zeta.sample(&mut rng);
            }
            if attempts > 0 {
                redraws += 1;
            }
            let p = da_inverse(2.0 * theta, n as f64)?;
            let k = Binomial::new(n, p)
                .map_err(|e| Error::Simulation(format!("binomial({n}, {p}): {e}")))?
                .sample(&mut rng);
            trials.push(Trial::new(format!("T{}", i + 1), ProportionOutcome::new(k, n)?));
            trial_thetas.push(theta);
        }
        studies.push(Study { id, trials, features });
    }

    let dataset = Dataset::new(studies)?;
    Ok((
        dataset,
        GroundTruth {
            config: config.clone(),
            study_effects,
            trial_thetas,
            redraws,
        },
    ))
}
