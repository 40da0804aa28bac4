//! Proportion <-> double-arcsine scale conversions and confusion-matrix metrics.
//!
//! Analysis happens on the Freeman–Tukey double-arcsine (DA) scale, where a
//! trial with `k` correct out of `n` has effect size
//! `θ = [asin √(k/(n+1)) + asin √((k+1)/(n+1))] / 2` and sampling variance
//! `v = 1/(4n + 2)`. Results go back to the proportion scale through the
//! Miller inverse with an effective sample size `n̂`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::t_quantile;

/// Radicand values in `[-RADICAND_TOL, 0)` are treated as rounding noise.
const RADICAND_TOL: f64 = 1e-12;

/// `k` correctly classified instances out of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProportionOutcome {
    k: u64,
    n: u64,
}

impl ProportionOutcome {
    pub fn new(k: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Data("sample size n must be at least 1".into()));
        }
        if k > n {
            return Err(Error::Data(format!("k = {k} exceeds n = {n}")));
        }
        Ok(Self { k, n })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn proportion(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// A trial's effect size on the DA scale with its sampling variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub theta: f64,
    pub v: f64,
}

/// Freeman–Tukey double-arcsine transform. Finite at `k = 0` and `k = n`.
pub fn da_transform(outcome: &ProportionOutcome) -> EffectSize {
    let k = outcome.k as f64;
    let n = outcome.n as f64;
    EffectSize {
        theta: da_value(k, n),
        v: 1.0 / (4.0 * n + 2.0),
    }
}

/// DA value for a possibly non-integer `k` and `n`.
fn da_value(k: f64, n: f64) -> f64 {
    ((k / (n + 1.0)).sqrt().asin() + ((k + 1.0) / (n + 1.0)).sqrt().asin()) / 2.0
}

/// Miller inverse of the double-arcsine transform.
///
/// `gamma` is on the doubled scale (`2θ`). Values below the image of `k = 0`
/// or above the image of `k = n̂` saturate at 0 and 1 respectively.
pub fn da_inverse(gamma: f64, n_hat: f64) -> Result<f64> {
    if !gamma.is_finite() || !n_hat.is_finite() {
        return Err(invalid(format!(
            "da_inverse needs finite inputs, got gamma = {gamma}, n_hat = {n_hat}"
        )));
    }
    if n_hat <= 0.0 {
        return Err(invalid(format!("effective sample size must be > 0, got {n_hat}")));
    }
    if gamma <= 2.0 * da_value(0.0, n_hat) {
        return Ok(0.0);
    }
    if gamma >= 2.0 * da_value(n_hat, n_hat) {
        return Ok(1.0);
    }
    let s = gamma.sin();
    let inner = s + (s - 1.0 / s) / n_hat;
    let mut radicand = 1.0 - inner * inner;
    if radicand < 0.0 {
        if radicand < -RADICAND_TOL {
            return Err(invalid(format!(
                "negative radicand {radicand:e} in da_inverse (gamma = {gamma}, n_hat = {n_hat})"
            )));
        }
        radicand = 0.0;
    }
    let sign = gamma.cos().signum();
    let p = (1.0 - sign * radicand.sqrt()) / 2.0;
    Ok(clamp_unit(p))
}

fn clamp_unit(p: f64) -> f64 {
    if (-1e-12..0.0).contains(&p) {
        0.0
    } else if p > 1.0 && p <= 1.0 + 1e-12 {
        1.0
    } else {
        p
    }
}

/// A DA-scale estimate mapped back to the proportion scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktransformedEstimate {
    pub p_bar: f64,
    pub lcb: f64,
    pub ucb: f64,
    pub n_hat: f64,
}

/// Backtransform a DA-scale estimate and its t-based interval.
///
/// The critical value is `t_{1-α/2, h-1}`. The lower bound is forced to 0 when
/// `p̄·n̂ < 2` and the upper bound to 1 when `(1 - p̄)·n̂ < 2`.
pub fn backtransform_ci(
    mu: f64,
    var_mu: f64,
    h: usize,
    alpha: f64,
    n_hat: f64,
) -> Result<BacktransformedEstimate> {
    if h < 2 {
        return Err(invalid(format!("need at least 2 studies for a t interval, got {h}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(var_mu >= 0.0) || !var_mu.is_finite() {
        return Err(invalid(format!("variance must be finite and >= 0, got {var_mu}")));
    }
    let t = t_quantile(1.0 - alpha / 2.0, (h - 1) as f64)?;
    let half_width = t * var_mu.sqrt();
    let p_bar = da_inverse(2.0 * mu, n_hat)?;
    let lcb = if p_bar * n_hat < 2.0 {
        0.0
    } else {
        da_inverse(2.0 * (mu - half_width), n_hat)?
    };
    let ucb = if (1.0 - p_bar) * n_hat < 2.0 {
        1.0
    } else {
        da_inverse(2.0 * (mu + half_width), n_hat)?
    };
    Ok(BacktransformedEstimate {
        p_bar,
        lcb: lcb.min(p_bar),
        ucb: ucb.max(p_bar),
        n_hat,
    })
}

/// Population-style backtransform where the effective sample size is `1/Var`.
pub fn backtransform_inverse_variance(
    mu: f64,
    var_mu: f64,
    h: usize,
    alpha: f64,
) -> Result<BacktransformedEstimate> {
    if !(var_mu > 0.0) {
        return Err(invalid(format!(
            "inverse-variance sample size needs a positive variance, got {var_mu}"
        )));
    }
    backtransform_ci(mu, var_mu, h, alpha, 1.0 / var_mu)
}

/// q×q table of counts: rows are observed classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

/// Recall, precision and F1 of a single class. `None` marks an undefined value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

impl ConfusionMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let q = counts.len();
        if q < 2 {
            return Err(Error::Data(format!("confusion matrix needs at least 2 classes, got {q}")));
        }
        if let Some(r) = counts.iter().position(|row| row.len() != q) {
            return Err(Error::Data(format!(
                "confusion matrix row {r} has {} entries, expected {q}",
                counts[r].len()
            )));
        }
        if counts.iter().flatten().all(|&c| c == 0) {
            return Err(Error::Data("confusion matrix is empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.classes())
            .map(|c| self.counts.iter().map(|row| row[c]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Chance benchmark from the observed class prevalences (row sums).
    pub fn benchmark(&self) -> f64 {
        benchmark_accuracy(&self.row_sums()).expect("a valid confusion matrix has positive total")
    }
}

/// Overall accuracy: diagonal sum over total.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> ProportionOutcome {
    ProportionOutcome {
        k: cm.diagonal(),
        n: cm.total(),
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let rows = cm.row_sums();
    let cols = cm.column_sums();
    (0..cm.classes())
        .map(|r| {
            let hit = cm.counts[r][r] as f64;
            let recall = (rows[r] > 0).then(|| hit / rows[r] as f64);
            let precision = (cols[r] > 0).then(|| hit / cols[r] as f64);
            let f1 = match (recall, precision) {
                (Some(re), Some(pr)) if re + pr > 0.0 => Some(2.0 * re * pr / (re + pr)),
                _ => None,
            };
            ClassMetrics {
                recall,
                precision,
                f1,
            }
        })
        .collect()
}

/// Expected accuracy of guessing each class with its prevalence: `Σ (n_r/n)²`.
pub fn benchmark_accuracy(class_counts: &[u64]) -> Result<f64> {
    if class_counts.len() < 2 {
        return Err(invalid("benchmark accuracy needs at least 2 classes"));
    }
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(invalid("benchmark accuracy needs a positive total count"));
    }
    let n = total as f64;
    Ok(class_counts
        .iter()
        .map(|&c| {
            let share = c as f64 / n;
            share * share
        })
        .sum())
}
