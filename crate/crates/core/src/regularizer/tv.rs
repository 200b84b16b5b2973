//! Anisotropic total variation on a row-major `rows × cols` image with forward
//! differences taken only where both neighbours exist.

use nalgebra::DVector;

/// Number of difference terms: horizontal then vertical.
pub(crate) fn edge_count(rows: usize, cols: usize) -> usize {
    rows * cols.saturating_sub(1) + rows.saturating_sub(1) * cols
}

/// `D x`: horizontal differences `x[i, j+1] − x[i, j]` followed by vertical
/// differences `x[i+1, j] − x[i, j]`.
pub(crate) fn diff(x: &DVector<f64>, rows: usize, cols: usize) -> DVector<f64> {
    let mut out = DVector::zeros(edge_count(rows, cols));
    let mut e = 0;
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            out[e] = x[i * cols + j + 1] - x[i * cols + j];
            e += 1;
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            out[e] = x[(i + 1) * cols + j] - x[i * cols + j];
            e += 1;
        }
    }
    out
}

/// `Dᵀ p`.
pub(crate) fn diff_adjoint(p: &DVector<f64>, rows: usize, cols: usize) -> DVector<f64> {
    let mut out = DVector::zeros(rows * cols);
    let mut e = 0;
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            out[i * cols + j + 1] += p[e];
            out[i * cols + j] -= p[e];
            e += 1;
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            out[(i + 1) * cols + j] += p[e];
            out[i * cols + j] -= p[e];
            e += 1;
        }
    }
    out
}

pub(crate) fn value(x: &DVector<f64>, rows: usize, cols: usize) -> f64 {
    diff(x, rows, cols).iter().map(|v| v.abs()).sum()
}

/// `Dᵀ sign(D x)` with `sign(0) = 0`.
pub(crate) fn subgradient(x: &DVector<f64>, rows: usize, cols: usize) -> DVector<f64> {
    let s = diff(x, rows, cols).map(|v| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    diff_adjoint(&s, rows, cols)
}

/// Stopping rule for the inner TV proximal solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvProxOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for TvProxOptions {
    fn default() -> Self {
        TvProxOptions {
            max_iter: 200,
            gap_tol: 1e-8,
        }
    }
}

/// `argmin_z α TV(z) + ‖z − x‖² / (2τ)` by accelerated projected gradient on the dual
/// `min_{‖p‖∞ ≤ α} ‖x − τ Dᵀp‖² / (2τ)`; the primal point is `z = x − τ Dᵀp`.
pub(crate) fn prox(
    x: &DVector<f64>,
    alpha: f64,
    tau: f64,
    rows: usize,
    cols: usize,
    opts: TvProxOptions,
) -> DVector<f64> {
    if alpha == 0.0 || edge_count(rows, cols) == 0 {
        return x.clone();
    }
    let m = edge_count(rows, cols);
    // ‖D‖² ≤ 8 on a 2-D grid
    let step = 1.0 / (8.0 * tau);
    let mut p = DVector::zeros(m);
    let mut q = p.clone();
    let mut t = 1.0f64;
    let primal_at = |p: &DVector<f64>| -> DVector<f64> { x - diff_adjoint(p, rows, cols) * tau };
    let x_sq = x.norm_squared();
    let mut z = primal_at(&p);
    for _ in 0..opts.max_iter {
        let gap = {
            let primal = alpha * value(&z, rows, cols) + (&z - x).norm_squared() / (2.0 * tau);
            let dual = (x_sq - z.norm_squared()) / (2.0 * tau);
            primal - dual
        };
        if gap <= opts.gap_tol {
            break;
        }
        let zq = primal_at(&q);
        let grad = diff(&zq, rows, cols);
        let next = (&q + grad * step).map(|v| v.clamp(-alpha, alpha));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        q = &next + (&next - &p) * ((t - 1.0) / t_next);
        p = next;
        t = t_next;
        z = primal_at(&p);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_identity() {
        let (r, c) = (3, 4);
        let x = DVector::from_fn(r * c, |i, _| (i as f64 * 1.3).sin());
        let p = DVector::from_fn(edge_count(r, c), |i, _| (i as f64 * 0.4).cos());
        let lhs = diff(&x, r, c).dot(&p);
        let rhs = x.dot(&diff_adjoint(&p, r, c));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn single_row_and_single_pixel() {
        assert_eq!(edge_count(1, 1), 0);
        assert_eq!(edge_count(1, 4), 3);
        let x = DVector::from_vec(vec![0.0, 2.0, 1.0]);
        assert_eq!(value(&x, 1, 3), 3.0);
    }

    #[test]
    fn prox_of_two_pixels_matches_closed_form() {
        // 1×2 image: the jump shrinks by 2ατ when large enough
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let z = prox(&x, 0.1, 1.0, 1, 2, TvProxOptions { max_iter: 10_000, gap_tol: 1e-14 });
        assert!((z[0] - 0.1).abs() < 1e-7 && (z[1] - 0.9).abs() < 1e-7, "{z}");
        // and merges both pixels once the threshold exceeds half the jump
        let z = prox(&x, 1.0, 1.0, 1, 2, TvProxOptions { max_iter: 10_000, gap_tol: 1e-14 });
        assert!((z[0] - 0.5).abs() < 1e-7 && (z[1] - 0.5).abs() < 1e-7, "{z}");
    }
}
