//! Block-diagonal marginal covariance and its inverse applied block by block.
//!
//! Each study contributes `M_j = σ²_ξ J + D_j` with `D_j = σ²_ζ I + diag(v_ij)`.
//! The inverse follows from the rank-one update identity
//! `(D + σ²_ξ 11ᵀ)⁻¹ = D⁻¹ - σ²_ξ D⁻¹11ᵀD⁻¹ / (1 + σ²_ξ 1ᵀD⁻¹1)`,
//! and `log|M_j| = Σ log D_ii + log(1 + σ²_ξ 1ᵀD⁻¹1)`.

use nalgebra::{DMatrix, DVector};

use super::VarianceComponents;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// One study's block: `between` on every entry plus `diag` on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundSymmetricBlock {
    pub study: String,
    pub between: f64,
    pub diag: Vec<f64>,
}

impl CompoundSymmetricBlock {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |r, c| {
            self.between + if r == c { self.diag[r] } else { 0.0 }
        })
    }
}

/// The marginal covariance `M` as the direct sum of per-study blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    pub blocks: Vec<CompoundSymmetricBlock>,
}

impl BlockCovariance {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.size()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut out = DMatrix::zeros(m, m);
        let mut offset = 0;
        for block in &self.blocks {
            let n = block.size();
            out.view_mut((offset, offset), (n, n))
                .copy_from(&block.to_dense());
            offset += n;
        }
        out
    }
}

pub fn marginal_covariance(components: &VarianceComponents, dataset: &Dataset) -> BlockCovariance {
    BlockCovariance {
        blocks: dataset
            .studies()
            .iter()
            .map(|study| CompoundSymmetricBlock {
                study: study.id.clone(),
                between: components.sigma2_xi,
                diag: study
                    .trials
                    .iter()
                    .map(|t| components.sigma2_zeta + t.effect.v)
                    .collect(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
struct BlockFactor {
    offset: usize,
    d_inv: Vec<f64>,
    /// σ²_ξ / (1 + σ²_ξ 1ᵀD⁻¹1)
    coupling: f64,
    log_det: f64,
}

impl BlockFactor {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let dx: f64 = self.d_inv.iter().zip(x).map(|(d, v)| d * v).sum();
        for ((o, &d), &v) in out.iter_mut().zip(&self.d_inv).zip(x) {
            *o = d * (v - self.coupling * dx);
        }
    }

    /// `1ᵀ M_j⁻¹ 1`
    fn ones_quadratic(&self) -> f64 {
        let s: f64 = self.d_inv.iter().sum();
        s - self.coupling * s * s
    }
}

/// Factored `W = M⁻¹`, applied without forming any m×m matrix.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    factors: Vec<BlockFactor>,
    dim: usize,
}

impl BlockWeights {
    pub fn new(cov: &BlockCovariance) -> Result<Self> {
        let mut offset = 0;
        let mut factors = Vec::with_capacity(cov.blocks.len());
        for block in &cov.blocks {
            if block.diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) || !(block.between >= 0.0)
            {
                return Err(Error::SingularBlock(block.study.clone()));
            }
            let d_inv: Vec<f64> = block.diag.iter().map(|d| 1.0 / d).collect();
            let s: f64 = d_inv.iter().sum();
            let denom = 1.0 + block.between * s;
            factors.push(BlockFactor {
                offset,
                coupling: block.between / denom,
                log_det: block.diag.iter().map(|d| d.ln()).sum::<f64>() + denom.ln(),
                d_inv,
            });
            offset += block.size();
        }
        Ok(Self {
            factors,
            dim: offset,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.factors.len()
    }

    /// `log|M|`
    pub fn log_det(&self) -> f64 {
        self.factors.iter().map(|f| f.log_det).sum()
    }

    pub fn apply_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.dim, "right-hand side length mismatch");
        let mut out = DVector::zeros(self.dim);
        for f in &self.factors {
            let n = f.d_inv.len();
            f.apply(
                &rhs.as_slice()[f.offset..f.offset + n],
                &mut out.as_mut_slice()[f.offset..f.offset + n],
            );
        }
        out
    }

    /// `W · rhs` for every column of `rhs`.
    pub fn apply(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(rhs.nrows(), self.dim, "right-hand side row count mismatch");
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for c in 0..rhs.ncols() {
            let col = rhs.column(c);
            let mut dst = out.column_mut(c);
            for f in &self.factors {
                let n = f.d_inv.len();
                let src: Vec<f64> = col.rows(f.offset, n).iter().copied().collect();
                let mut tmp = vec![0.0; n];
                f.apply(&src, &mut tmp);
                dst.rows_mut(f.offset, n).copy_from_slice(&tmp);
            }
        }
        out
    }

    /// `M_j⁻¹ x` for the block of study `j`.
    pub fn block_apply(&self, j: usize, x: &[f64]) -> Vec<f64> {
        let f = &self.factors[j];
        let mut out = vec![0.0; f.d_inv.len()];
        f.apply(x, &mut out);
        out
    }

    /// `1ᵀ M_j⁻¹ 1` for study `j`.
    pub fn block_ones_quadratic(&self, j: usize) -> f64 {
        self.factors[j].ones_quadratic()
    }

    /// Row sums of `W` (the per-trial total weights).
    pub fn row_sums(&self) -> DVector<f64> {
        self.apply_vec(&DVector::from_element(self.dim, 1.0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply(&DMatrix::identity(self.dim, self.dim))
    }
}

/// `W · rhs` and `log|M|` for the given components.
pub fn block_weight_solve(
    components: &VarianceComponents,
    dataset: &Dataset,
    rhs: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let weights = BlockWeights::new(&marginal_covariance(components, dataset))?;
    if rhs.nrows() != weights.dim() {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} rows, dataset has {} trials",
            rhs.nrows(),
            weights.dim()
        )));
    }
    Ok((weights.apply(rhs), weights.log_det()))
}
