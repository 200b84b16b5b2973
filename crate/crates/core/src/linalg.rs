//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SekiError};

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Extreme eigenvalues of `(1/J) E Eᵀ` for a `d × J` deviation matrix, using the smaller
/// Gram matrix when `J < d`.
pub fn gram_eigen_extremes(deviations: &DMatrix<f64>) -> (f64, f64) {
    let (d, j) = deviations.shape();
    let inv = 1.0 / j as f64;
    if j < d {
        let mut g = deviations.tr_mul(deviations) * inv;
        symmetrize(&mut g);
        let (_, max) = eigen_extremes(&g);
        // rank ≤ J - 1 < d, so the smallest eigenvalue of the d × d matrix is zero
        (0.0, max)
    } else {
        let mut c = deviations * deviations.transpose() * inv;
        symmetrize(&mut c);
        eigen_extremes(&c)
    }
}

/// Symmetric positive semidefinite square root through an eigendecomposition.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Inverse of an SPD matrix through Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| SekiError::invalid(what, "matrix is not symmetric positive definite"))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = sym_sqrt(&m);
        assert!(frobenius(&(&r * &r - &m)) < 1e-12);
    }

    #[test]
    fn gram_route_matches_dense_route() {
        let e = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let (_, max_gram) = gram_eigen_extremes(&e);
        let c = &e * e.transpose() / 3.0;
        let (_, max_dense) = eigen_extremes(&c);
        assert!((max_gram - max_dense).abs() < 1e-12);
    }

    #[test]
    fn slope_of_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        assert!((ls_slope(&xs, &ys) - 2.0).abs() < 1e-14);
    }
}
