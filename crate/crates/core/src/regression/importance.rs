//! K-fold permutation feature importance on held-out RMSE.
//!
//! Trials are split into `K` folds at random. For each fold the full model is
//! refitted on the remaining folds and scored on the held-out trials with
//! fixed-effects predictions. Each feature is then shuffled `B` times across
//! the held-out trials (all of its dummy columns move together) and the
//! ratio of permuted to original RMSE is recorded. Columns aliased within a
//! training set get a zero coefficient.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{encode_unchecked, FeatureSpec};
use crate::data::Dataset;
use crate::design::FeatureMatrix;
use crate::error::{Error, Result};
use crate::multilevel::reml_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfiOptions {
    pub folds: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for PfiOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            permutations: 200,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub p2_5: f64,
    pub p25: f64,
    pub p75: f64,
    pub p97_5: f64,
    /// Fold-major: `replicates[fold * B + b]`.
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiReport {
    pub options: PfiOptions,
    /// Held-out RMSE of the unpermuted model, per fold.
    pub original_rmse: Vec<f64>,
    pub features: Vec<FeatureImportance>,
}

impl PfiReport {
    pub fn feature(&self, name: &str) -> Option<&FeatureImportance> {
        self.features.iter().find(|f| f.feature == name)
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn rmse(observed: &[f64], predicted: &DVector<f64>) -> f64 {
    let sse: f64 = observed
        .iter()
        .zip(predicted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    (sse / observed.len() as f64).sqrt()
}

pub fn permutation_importance(
    dataset: &Dataset,
    specs: &[FeatureSpec],
    selected: &[String],
    options: PfiOptions,
) -> Result<PfiReport> {
    let PfiOptions {
        folds,
        permutations,
        seed,
    } = options;
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if permutations < 1 {
        return Err(Error::InvalidArgument("need at least 1 permutation".into()));
    }
    let m = dataset.num_trials();
    if m < 2 * folds {
        return Err(Error::Data(format!(
            "{m} trials are too few for {folds} folds (need {})",
            2 * folds
        )));
    }
    let x = encode_unchecked(dataset, specs, selected)?;
    let theta = dataset.thetas();

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; m];
    for (pos, &trial) in order.iter().enumerate() {
        fold_of[trial] = pos % folds;
    }

    let per_fold: Vec<(f64, Vec<Vec<f64>>)> = (0..folds)
        .into_par_iter()
        .map(|fold| run_fold(dataset, &x, &theta, &fold_of, fold, options))
        .collect::<Result<_>>()?;

    let features = x
        .groups()
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let replicates: Vec<f64> = per_fold.iter().flat_map(|(_, r)| r[g].iter().copied()).collect();
            let mut sorted = replicates.clone();
            sorted.sort_by(f64::total_cmp);
            FeatureImportance {
                feature: group.feature.clone(),
                mean: replicates.iter().sum::<f64>() / replicates.len() as f64,
                p2_5: percentile(&sorted, 2.5),
                p25: percentile(&sorted, 25.0),
                p75: percentile(&sorted, 75.0),
                p97_5: percentile(&sorted, 97.5),
                replicates,
            }
        })
        .collect();

    Ok(PfiReport {
        options,
        original_rmse: per_fold.iter().map(|(r, _)| *r).collect(),
        features,
    })
}

fn run_fold(
    dataset: &Dataset,
    x: &FeatureMatrix,
    theta: &[f64],
    fold_of: &[usize],
    fold: usize,
    options: PfiOptions,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let train: Vec<usize> = (0..theta.len()).filter(|&i| fold_of[i] != fold).collect();
    let test: Vec<usize> = (0..theta.len()).filter(|&i| fold_of[i] == fold).collect();

    let train_x = x.select_rows(&train);
    let keep = train_x.independent_columns();
    if keep.len() + 2 > train.len() {
        return Err(Error::Data(format!(
            "fold {fold}: {} training trials cannot fit {} coefficients and 2 variances",
            train.len(),
            keep.len()
        )));
    }
    let train_ds = dataset.subset_trials(&train)?;
    let fit = reml_fit(&train_ds, &train_x.select_columns(&keep))?;
    let mut beta = DVector::zeros(x.ncols());
    for (i, &c) in keep.iter().enumerate() {
        beta[c] = fit.beta[i];
    }

    let test_x: DMatrix<f64> = x.matrix().select_rows(&test);
    let observed: Vec<f64> = test.iter().map(|&i| theta[i]).collect();
    let original = rmse(&observed, &(&test_x * &beta));
    if !(original > 0.0) {
        return Err(Error::Data(format!("fold {fold}: held-out RMSE is zero")));
    }

    let n_groups = x.groups().len() as u64;
    let ratios = x
        .groups()
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(1 + fold as u64 * n_groups + g as u64);
            let mut rows: Vec<usize> = (0..test.len()).collect();
            (0..options.permutations)
                .map(|_| {
                    rows.shuffle(&mut rng);
                    let mut permuted = test_x.clone();
                    for c in group.columns.clone() {
                        for (dst, &src) in rows.iter().enumerate() {
                            permuted[(dst, c)] = test_x[(src, c)];
                        }
                    }
                    rmse(&observed, &(&permuted * &beta)) / original
                })
                .collect()
        })
        .collect();
    Ok((original, ratios))
}
