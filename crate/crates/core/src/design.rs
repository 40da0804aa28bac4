use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Columns of the design matrix that came from one input feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGroup {
    pub feature: String,
    pub columns: Range<usize>,
}

/// Trial-aligned design matrix with the intercept in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    groups: Vec<ColumnGroup>,
    matrix: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn intercept_only(m: usize) -> Self {
        Self {
            names: vec!["intercept".into()],
            groups: Vec::new(),
            matrix: DMatrix::from_element(m, 1, 1.0),
        }
    }

    /// Assemble from explicit columns. `groups` must tile columns `1..p`.
    pub fn new(names: Vec<String>, groups: Vec<ColumnGroup>, matrix: DMatrix<f64>) -> Result<Self> {
        if names.len() != matrix.ncols() {
            return Err(Error::InvalidArgument(format!(
                "{} column names for {} columns",
                names.len(),
                matrix.ncols()
            )));
        }
        if matrix.ncols() == 0 || matrix.column(0).iter().any(|&x| x != 1.0) {
            return Err(Error::InvalidArgument(
                "column 0 of a design matrix must be the intercept".into(),
            ));
        }
        let mut next = 1;
        for g in &groups {
            if g.columns.start != next || g.columns.end <= g.columns.start {
                return Err(Error::InvalidArgument(format!(
                    "column group for '{}' is not contiguous",
                    g.feature
                )));
            }
            next = g.columns.end;
        }
        if next != matrix.ncols() {
            return Err(Error::InvalidArgument(
                "column groups do not cover the design matrix".into(),
            ));
        }
        Ok(Self {
            names,
            groups,
            matrix,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn groups(&self) -> &[ColumnGroup] {
        &self.groups
    }

    pub fn group(&self, feature: &str) -> Option<&ColumnGroup> {
        self.groups.iter().find(|g| g.feature == feature)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            groups: self.groups.clone(),
            matrix: self.matrix.select_rows(rows),
        }
    }

    /// Keep only the listed columns (must include 0). Groups that lose all of
    /// their columns are dropped; partially kept groups shrink.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut groups = Vec::new();
        let mut start = 1;
        for g in &self.groups {
            let kept = keep.iter().filter(|c| g.columns.contains(c)).count();
            if kept > 0 {
                groups.push(ColumnGroup {
                    feature: g.feature.clone(),
                    columns: start..start + kept,
                });
                start += kept;
            }
        }
        Self {
            names: keep.iter().map(|&c| self.names[c].clone()).collect(),
            groups,
            matrix: self.matrix.select_columns(keep),
        }
    }

    /// Numerical rank from the singular values.
    pub fn rank(&self) -> usize {
        matrix_rank(&self.matrix)
    }

    pub fn check_full_rank(&self) -> Result<()> {
        let rank = self.rank();
        if rank < self.ncols() {
            return Err(Error::RankDeficient(format!(
                "rank {rank} < {} columns ({})",
                self.ncols(),
                self.names.join(", ")
            )));
        }
        Ok(())
    }

    /// Greedy left-to-right choice of linearly independent columns.
    pub fn independent_columns(&self) -> Vec<usize> {
        let mut keep: Vec<usize> = Vec::new();
        for c in 0..self.ncols() {
            let mut trial = keep.clone();
            trial.push(c);
            if matrix_rank(&self.matrix.select_columns(&trial)) == trial.len() {
                keep = trial;
            }
        }
        keep
    }
}

fn matrix_rank(x: &DMatrix<f64>) -> usize {
    if x.ncols() == 0 || x.nrows() == 0 {
        return 0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    let tol = largest * 1e-10 * x.nrows().max(x.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}
