//! Linear forward operators, the Tikhonov-augmented system and the two benchmark
//! operators (parallel-beam ray transform and correlated Gaussian sensing).

mod covariance;
pub mod io;
mod radon;

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use covariance::NoiseCovariance;
pub use radon::{build_radon, chord_length, RadonGeometry};

use crate::error::{Result, SekiError};
use crate::linalg;

/// `y = A x + η`, `η ~ N(0, Γ)`, with misfit `Φ(x) = ½‖Ax − y‖²_Γ`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    a: DMatrix<f64>,
    gamma: NoiseCovariance,
    y: DVector<f64>,
}

/// Extreme eigenvalues `μ ≤ L` of the misfit Hessian `S = AᵀΓ⁻¹A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    pub mu: f64,
    pub l: f64,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, gamma: NoiseCovariance, y: DVector<f64>) -> Result<Self> {
        if gamma.size() != a.nrows() {
            return Err(SekiError::dim(format!(
                "gamma has size {}, forward matrix has {} rows",
                gamma.size(),
                a.nrows()
            )));
        }
        if y.len() != a.nrows() {
            return Err(SekiError::dim(format!(
                "data has length {}, forward matrix has {} rows",
                y.len(),
                a.nrows()
            )));
        }
        Ok(LinearModel { a, gamma, y })
    }

    /// Model with `Γ = σ² I`.
    pub fn with_noise_std(a: DMatrix<f64>, sigma: f64, y: DVector<f64>) -> Result<Self> {
        let gamma = NoiseCovariance::isotropic(a.nrows(), sigma * sigma)?;
        Self::new(a, gamma, y)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn gamma(&self) -> &NoiseCovariance {
        &self.gamma
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Data dimension `K`.
    pub fn data_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn with_data(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.gamma.clone(), y)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(SekiError::dim(format!(
                "state has length {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(&self.a * x)
    }

    /// `½ (Ax − y)ᵀ Γ⁻¹ (Ax − y)`.
    pub fn misfit_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value_from_residual(&(&self.a * x - &self.y)))
    }

    /// `AᵀΓ⁻¹(Ax − y)`.
    pub fn misfit_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let w = self.gamma.solve(&(&self.a * x - &self.y));
        Ok(self.a.tr_mul(&w))
    }

    /// Value and gradient from one forward evaluation.
    pub fn misfit_value_and_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_dim(x)?;
        let r = &self.a * x - &self.y;
        let w = self.gamma.solve(&r);
        Ok((0.5 * r.dot(&w), self.a.tr_mul(&w)))
    }

    pub(crate) fn value_from_residual(&self, r: &DVector<f64>) -> f64 {
        0.5 * r.dot(&self.gamma.solve(r))
    }

    /// Dense, symmetrized `S = AᵀΓ⁻¹A`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let w = self.gamma.solve_matrix(&self.a);
        let mut s = self.a.tr_mul(&w);
        linalg::symmetrize(&mut s);
        s
    }

    /// Extreme eigenvalues of `S`. `mu` may be zero (or round-off negative) when `A`
    /// has a nontrivial null space.
    pub fn spectral_bounds(&self) -> SpectralBounds {
        let (mu, l) = linalg::eigen_extremes(&self.hessian());
        SpectralBounds { mu, l }
    }

    pub fn describe(&self) -> String {
        format!("linear(K={},d={},gamma={})", self.data_dim(), self.dim(), self.gamma.describe())
    }
}

/// Tikhonov regularization folded into the misfit through `A_aug = [A; I]`,
/// `Γ_aug = diag(Γ, C₀)` and `y_aug = [y; 0]`.
#[derive(Clone, Debug)]
pub struct AugmentedModel {
    base: LinearModel,
    c0: NoiseCovariance,
    combined: LinearModel,
}

impl AugmentedModel {
    pub fn base(&self) -> &LinearModel {
        &self.base
    }

    pub fn prior_covariance(&self) -> &NoiseCovariance {
        &self.c0
    }

    /// `C₀⁻¹`, dense.
    pub fn prior_precision(&self) -> DMatrix<f64> {
        self.c0.solve_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// The stacked system as a plain linear model.
    pub fn combined(&self) -> &LinearModel {
        &self.combined
    }

    pub fn describe(&self) -> String {
        format!("augmented({},c0={})", self.base.describe(), self.c0.describe())
    }
}

impl Deref for AugmentedModel {
    type Target = LinearModel;

    fn deref(&self) -> &LinearModel {
        &self.combined
    }
}

/// Assemble the augmented model for a dense SPD prior covariance `c0`.
pub fn build_augmented(base: LinearModel, c0: DMatrix<f64>) -> Result<AugmentedModel> {
    if c0.nrows() != base.dim() || !c0.is_square() {
        return Err(SekiError::dim(format!(
            "prior covariance is {}x{}, state dimension is {}",
            c0.nrows(),
            c0.ncols(),
            base.dim()
        )));
    }
    let c0 = NoiseCovariance::dense(c0).map_err(|_| SekiError::invalid("c0", "prior covariance is not SPD"))?;
    build_augmented_with(base, c0)
}

/// Assemble the augmented model for any prior covariance representation.
pub fn build_augmented_with(base: LinearModel, c0: NoiseCovariance) -> Result<AugmentedModel> {
    let d = base.dim();
    let k = base.data_dim();
    if c0.size() != d {
        return Err(SekiError::dim("prior covariance size differs from state dimension"));
    }
    let mut a = DMatrix::zeros(k + d, d);
    a.rows_mut(0, k).copy_from(base.a());
    a.rows_mut(k, d).fill_with_identity();
    let mut y = DVector::zeros(k + d);
    y.rows_mut(0, k).copy_from(base.y());
    let gamma = NoiseCovariance::BlockDiag(vec![base.gamma().clone(), c0.clone()]);
    let combined = LinearModel::new(a, gamma, y)?;
    Ok(AugmentedModel { base, c0, combined })
}

/// `A = B Σ^{1/2}` with `B_ij ~ N(0, 1/K)` and `Σ_ij = ρ^{|i−j|}`.
pub fn build_correlated_sensing<R: Rng + ?Sized>(
    k: usize,
    d: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(SekiError::invalid("rho", format!("must lie in [0, 1), got {rho}")));
    }
    if k == 0 || d == 0 {
        return Err(SekiError::invalid("sensing", "dimensions must be positive"));
    }
    let std = (1.0 / k as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    // row-major fill keeps the draw order independent of storage layout
    let mut b = DMatrix::zeros(k, d);
    for i in 0..k {
        for j in 0..d {
            b[(i, j)] = normal.sample(rng);
        }
    }
    if rho == 0.0 {
        return Ok(b);
    }
    Ok(b * linalg::sym_sqrt(&toeplitz_correlation(d, rho)))
}

/// `Σ_ij = ρ^{|i−j|}`.
pub fn toeplitz_correlation(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Sparse vector with a uniformly random support of size `s` and `N(0,1)` amplitudes.
pub fn generate_sparse_truth<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Result<DVector<f64>> {
    if s == 0 || s > d {
        return Err(SekiError::invalid("s", format!("sparsity {s} must lie in [1, {d}]")));
    }
    let mut support: Vec<usize> = sample(rng, d, s).into_vec();
    support.sort_unstable();
    let mut x = DVector::zeros(d);
    for i in support {
        x[i] = rng.sample(StandardNormal);
    }
    Ok(x)
}

/// `y = A x† + η`, `η ~ N(0, σ² I)`.
pub fn observe<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    x_true: &DVector<f64>,
    sigma: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(sigma >= 0.0) {
        return Err(SekiError::invalid("sigma", format!("noise level must be nonnegative, got {sigma}")));
    }
    if x_true.len() != a.ncols() {
        return Err(SekiError::dim("truth length differs from forward matrix columns"));
    }
    let mut y = a * x_true;
    if sigma > 0.0 {
        for v in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use nalgebra::dvector;

    fn random_model(k: usize, d: usize, seed: u64) -> LinearModel {
        let mut rng = SeedStream::new(seed).fork("model");
        let a = DMatrix::from_fn(k, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = DMatrix::from_fn(k, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let gamma = &g * g.transpose() + DMatrix::identity(k, k);
        LinearModel::new(a, NoiseCovariance::dense(gamma).unwrap(), y).unwrap()
    }

    #[test]
    fn exact_fit_has_zero_misfit() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let x = dvector![1.0, -1.0];
        let y = &a * &x;
        let m = LinearModel::with_noise_std(a, 1.0, y).unwrap();
        assert_eq!(m.misfit_value(&x).unwrap(), 0.0);
        assert_eq!(m.misfit_gradient(&x).unwrap(), dvector![0.0, 0.0]);
    }

    #[test]
    fn scalar_misfit() {
        let m = LinearModel::with_noise_std(DMatrix::from_element(1, 1, 1.0), 1.0, dvector![0.0]).unwrap();
        assert_eq!(m.misfit_value(&dvector![2.0]).unwrap(), 2.0);
        assert_eq!(m.misfit_gradient(&dvector![2.0]).unwrap()[0], 2.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = random_model(4, 6, 11);
        let x = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
        let g = m.misfit_gradient(&x).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (m.misfit_value(&xp).unwrap() - m.misfit_value(&xm).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs());
        }
        assert!(worst <= 1e-6, "max abs error {worst}");
    }

    #[test]
    fn dimension_errors() {
        let m = random_model(3, 2, 1);
        assert!(m.misfit_value(&dvector![1.0]).is_err());
        assert!(LinearModel::with_noise_std(DMatrix::zeros(3, 2), 1.0, dvector![1.0]).is_err());
    }

    #[test]
    fn augmented_prior_only_and_identity_examples() {
        let base = LinearModel::with_noise_std(DMatrix::zeros(2, 3), 1.0, DVector::zeros(2)).unwrap();
        let aug = build_augmented(base, DMatrix::identity(3, 3)).unwrap();
        let x = dvector![1.0, -2.0, 0.5];
        assert!((aug.misfit_value(&x).unwrap() - 0.5 * x.norm_squared()).abs() < 1e-14);

        let base = LinearModel::with_noise_std(DMatrix::identity(2, 2), 1.0, DVector::zeros(2)).unwrap();
        let aug = build_augmented(base, DMatrix::identity(2, 2)).unwrap();
        assert!((aug.misfit_value(&dvector![1.0, 0.0]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn augmented_hessian_identity() {
        let base = random_model(4, 3, 5);
        let mut rng = SeedStream::new(9).fork("c0");
        let g = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c0 = &g * g.transpose() + DMatrix::identity(3, 3) * 0.5;
        let aug = build_augmented(base.clone(), c0.clone()).unwrap();
        // direct assembly oracle
        let gamma_inv = linalg::spd_inverse(&base.gamma().to_dense(), "gamma").unwrap();
        let expect = base.a().transpose() * gamma_inv * base.a() + linalg::spd_inverse(&c0, "c0").unwrap();
        let s = aug.hessian();
        assert!(linalg::frobenius(&(&s - &expect)) <= 1e-10 * linalg::frobenius(&expect));
        assert!(linalg::frobenius(&(&s - s.transpose())) <= 1e-12);
        let b = aug.spectral_bounds();
        assert!(0.0 < b.mu && b.mu <= b.l);
    }

    #[test]
    fn augmented_rejects_non_spd_prior() {
        let base = random_model(2, 2, 3);
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        assert!(matches!(build_augmented(base, c0), Err(SekiError::Invalid { .. })));
    }

    #[test]
    fn uncorrelated_sensing_is_plain_gaussian() {
        let s = SeedStream::new(3);
        let a = build_correlated_sensing(10, 7, 0.0, &mut s.fork("a")).unwrap();
        let mut rng = s.fork("a");
        let normal = Normal::new(0.0, (0.1f64).sqrt()).unwrap();
        let b = DMatrix::from_row_iterator(10, 7, (0..70).map(|_| normal.sample(&mut rng)));
        assert_eq!(a, b);
        assert!(build_correlated_sensing(3, 3, 1.0, &mut s.fork("x")).is_err());
        assert!(build_correlated_sensing(3, 3, -0.1, &mut s.fork("x")).is_err());
    }

    #[test]
    fn correlation_root_squares_back() {
        let sigma = toeplitz_correlation(64, 0.95);
        let r = linalg::sym_sqrt(&sigma);
        assert!(linalg::frobenius(&(&r * &r - &sigma)) <= 1e-8);
    }

    #[test]
    fn sensing_columns_have_requested_correlation() {
        // Monte-Carlo oracle: E[AᵀA] = Σ^{1/2} E[BᵀB] Σ^{1/2} = Σ
        let (k, d, n) = (40usize, 8usize, 2000usize);
        let sigma = toeplitz_correlation(d, 0.9);
        let stream = SeedStream::new(21);
        let mut acc = DMatrix::zeros(d, d);
        let mut rng = stream.fork("mc");
        for _ in 0..n {
            let a = build_correlated_sensing(k, d, 0.9, &mut rng).unwrap();
            acc += a.tr_mul(&a);
        }
        acc /= n as f64;
        let tol = 5.0 / (k as f64).sqrt();
        let worst = (&acc - &sigma).abs().max();
        assert!(worst <= tol, "entrywise deviation {worst} > {tol}");
    }

    #[test]
    fn correlation_condition_grows_with_rho() {
        let mut last = 0.0;
        for rho in [0.0, 0.5, 0.9, 0.95, 0.98] {
            let (lo, hi) = linalg::eigen_extremes(&toeplitz_correlation(64, rho));
            let cond = hi / lo;
            assert!(cond > last || (rho == 0.0 && cond == 1.0));
            last = cond;
        }
    }

    #[test]
    fn sparse_truth_and_observation() {
        let s = SeedStream::new(4);
        let x = generate_sparse_truth(50, 7, &mut s.fork("t")).unwrap();
        assert_eq!(x.iter().filter(|v| **v != 0.0).count(), 7);
        let dense = generate_sparse_truth(9, 9, &mut s.fork("t")).unwrap();
        assert_eq!(dense.iter().filter(|v| **v != 0.0).count(), 9);
        assert!(generate_sparse_truth(3, 4, &mut s.fork("t")).is_err());

        let a = DMatrix::from_fn(5, 50, |i, j| ((i + j) as f64).cos());
        let y = observe(&a, &x, 0.0, &mut s.fork("n")).unwrap();
        assert_eq!(y, &a * &x);
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let sigma = 0.02;
        let a = DMatrix::zeros(10_000, 1);
        let y = observe(&a, &dvector![0.0], sigma, &mut SeedStream::new(8).fork("n")).unwrap();
        let var = y.norm_squared() / y.len() as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05, "variance ratio {}", var / (sigma * sigma));
    }
}
