use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SekiError};

/// Symmetric positive definite noise (or prior) covariance with a cheap inverse action.
#[derive(Clone, Debug)]
pub enum NoiseCovariance {
    /// `variance · I` of the given size.
    Isotropic { size: usize, variance: f64 },
    Dense {
        matrix: DMatrix<f64>,
        cholesky: Cholesky<f64, Dyn>,
    },
    /// Block-diagonal composition, blocks in order.
    BlockDiag(Vec<NoiseCovariance>),
}

impl NoiseCovariance {
    pub fn isotropic(size: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(SekiError::invalid("gamma", format!("variance must be positive, got {variance}")));
        }
        Ok(NoiseCovariance::Isotropic { size, variance })
    }

    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(SekiError::dim("covariance must be square"));
        }
        let cholesky = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| SekiError::invalid("covariance", "not symmetric positive definite"))?;
        Ok(NoiseCovariance::Dense { matrix, cholesky })
    }

    pub fn size(&self) -> usize {
        match self {
            NoiseCovariance::Isotropic { size, .. } => *size,
            NoiseCovariance::Dense { matrix, .. } => matrix.nrows(),
            NoiseCovariance::BlockDiag(blocks) => blocks.iter().map(|b| b.size()).sum(),
        }
    }

    /// `Γ⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseCovariance::Isotropic { variance, .. } => v / *variance,
            NoiseCovariance::Dense { cholesky, .. } => cholesky.solve(v),
            NoiseCovariance::BlockDiag(blocks) => {
                let mut out = DVector::zeros(v.len());
                let mut off = 0;
                for b in blocks {
                    let n = b.size();
                    let part = b.solve(&v.rows(off, n).into_owned());
                    out.rows_mut(off, n).copy_from(&part);
                    off += n;
                }
                out
            }
        }
    }

    /// `Γ⁻¹ M`, column by column.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NoiseCovariance::Isotropic { variance, .. } => m / *variance,
            NoiseCovariance::Dense { cholesky, .. } => cholesky.solve(m),
            NoiseCovariance::BlockDiag(blocks) => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                let mut off = 0;
                for b in blocks {
                    let n = b.size();
                    let part = b.solve_matrix(&m.rows(off, n).into_owned());
                    out.rows_mut(off, n).copy_from(&part);
                    off += n;
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            NoiseCovariance::Isotropic { size, variance } => DMatrix::identity(*size, *size) * *variance,
            NoiseCovariance::Dense { matrix, .. } => matrix.clone(),
            NoiseCovariance::BlockDiag(blocks) => {
                let n = self.size();
                let mut out = DMatrix::zeros(n, n);
                let mut off = 0;
                for b in blocks {
                    let k = b.size();
                    out.view_mut((off, off), (k, k)).copy_from(&b.to_dense());
                    off += k;
                }
                out
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseCovariance::Isotropic { size, variance } => format!("iso({size},{variance:e})"),
            NoiseCovariance::Dense { matrix, .. } => format!("dense({})", matrix.nrows()),
            NoiseCovariance::BlockDiag(blocks) => {
                let parts: Vec<String> = blocks.iter().map(|b| b.describe()).collect();
                format!("blockdiag[{}]", parts.join(";"))
            }
        }
    }
}
