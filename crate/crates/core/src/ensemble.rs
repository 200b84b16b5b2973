//! Particle ensembles and the empirical statistics that drive every Kalman update.
//!
//! All statistics use the `1/J` normalization:
//! `C = (1/J) Σ_j (x⁽ʲ⁾ − x̄)(x⁽ʲ⁾ − x̄)ᵀ` and likewise for the cross-covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SekiError};
use crate::linalg;

/// `J ≥ 2` particles in `R^d`, stored as the columns of a `d × J` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: DMatrix<f64>,
}

/// Mean, deviations, covariance and spread of an ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// `d × J`, column `j` is `x⁽ʲ⁾ − x̄`.
    pub deviations: DMatrix<f64>,
    /// `E = (1/J) Σ_j ‖x⁽ʲ⁾ − x̄‖²`, equal to `trace(C)`.
    pub spread: f64,
}

/// Empirical covariance between state deviations and forward-output deviations.
#[derive(Clone, Debug)]
pub struct CrossCovariance {
    /// `d × m`.
    pub matrix: DMatrix<f64>,
    pub forward_mean: DVector<f64>,
}

impl Ensemble {
    pub fn from_matrix(particles: DMatrix<f64>) -> Result<Self> {
        if particles.nrows() == 0 {
            return Err(SekiError::invalid("ensemble", "particle dimension must be positive"));
        }
        if particles.ncols() < 2 {
            return Err(SekiError::invalid(
                "ensemble",
                format!("need at least 2 particles, got {}", particles.ncols()),
            ));
        }
        Ok(Ensemble { particles })
    }

    pub fn from_particles(particles: &[DVector<f64>]) -> Result<Self> {
        let d = particles.first().map(|p| p.len()).unwrap_or(0);
        if let Some((j, p)) = particles.iter().enumerate().find(|(_, p)| p.len() != d) {
            return Err(SekiError::dim(format!(
                "particle {j} has dimension {}, expected {d}",
                p.len()
            )));
        }
        let cols: Vec<_> = particles.iter().map(|p| p.clone()).collect();
        if cols.is_empty() {
            return Err(SekiError::invalid("ensemble", "no particles"));
        }
        Self::from_matrix(DMatrix::from_columns(&cols))
    }

    /// I.i.d. particles `x⁽ʲ⁾ ~ N(mean, std² I)`.
    pub fn gaussian<R: Rng + ?Sized>(
        mean: &DVector<f64>,
        std: f64,
        size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = mean.len();
        let mut m = DMatrix::zeros(d, size);
        for j in 0..size {
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                m[(i, j)] = mean[i] + std * z;
            }
        }
        Self::from_matrix(m)
    }

    /// Ensemble with mean `mean` and the given deviations (columns must sum to zero).
    pub fn from_mean_and_deviations(mean: &DVector<f64>, deviations: &DMatrix<f64>) -> Result<Self> {
        if mean.len() != deviations.nrows() {
            return Err(SekiError::dim("mean and deviations have different dimension"));
        }
        let mut m = deviations.clone();
        for mut col in m.column_iter_mut() {
            col += mean;
        }
        Self::from_matrix(m)
    }

    pub fn dim(&self) -> usize {
        self.particles.nrows()
    }

    pub fn size(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    pub fn particles_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.particles
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.particles
    }

    pub fn particle(&self, j: usize) -> DVector<f64> {
        self.particles.column(j).into_owned()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.particles.column_mean()
    }

    pub fn deviations(&self) -> DMatrix<f64> {
        deviations_about(&self.particles, &self.mean())
    }

    pub fn spread(&self) -> f64 {
        let e = self.deviations();
        e.iter().map(|v| v * v).sum::<f64>() / self.size() as f64
    }

    /// Mean, deviations, dense symmetrized covariance and spread.
    pub fn stats(&self) -> EnsembleStats {
        let mean = self.mean();
        let deviations = deviations_about(&self.particles, &mean);
        let j = self.size() as f64;
        let mut covariance = &deviations * deviations.transpose() / j;
        linalg::symmetrize(&mut covariance);
        let spread = deviations.iter().map(|v| v * v).sum::<f64>() / j;
        EnsembleStats {
            mean,
            covariance,
            deviations,
            spread,
        }
    }

    /// Cross-covariance with forward outputs given as the columns of an `m × J` matrix.
    pub fn cross_covariance(&self, outputs: &DMatrix<f64>) -> Result<CrossCovariance> {
        if outputs.ncols() != self.size() {
            return Err(SekiError::dim(format!(
                "{} forward outputs for {} particles",
                outputs.ncols(),
                self.size()
            )));
        }
        let forward_mean = outputs.column_mean();
        let out_dev = deviations_about(outputs, &forward_mean);
        let matrix = self.deviations() * out_dev.transpose() / self.size() as f64;
        Ok(CrossCovariance {
            matrix,
            forward_mean,
        })
    }

    /// Apply a map to every particle and return the outputs as columns.
    pub fn map_particles<F>(&self, mut f: F) -> DMatrix<f64>
    where
        F: FnMut(&DVector<f64>) -> DVector<f64>,
    {
        let cols: Vec<DVector<f64>> = (0..self.size()).map(|j| f(&self.particle(j))).collect();
        DMatrix::from_columns(&cols)
    }
}

impl EnsembleStats {
    /// `C v` through the deviation factorization `(1/J) E (Eᵀ v)`.
    pub fn apply_covariance(&self, v: &DVector<f64>) -> DVector<f64> {
        covariance_times(&self.deviations, v)
    }
}

/// `(1/J) E (Eᵀ v)` for a `d × J` deviation matrix.
pub fn covariance_times(deviations: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let j = deviations.ncols() as f64;
    deviations * (deviations.tr_mul(v)) / j
}

pub(crate) fn deviations_about(cols: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut e = cols.clone();
    for mut col in e.column_iter_mut() {
        col -= mean;
    }
    e
}

/// Free-function form of [`Ensemble::stats`].
pub fn compute_stats(ens: &Ensemble) -> EnsembleStats {
    ens.stats()
}

/// Cross-covariance from a list of forward outputs, one per particle.
pub fn cross_covariance(ens: &Ensemble, outputs: &[DVector<f64>]) -> Result<CrossCovariance> {
    if outputs.len() != ens.size() {
        return Err(SekiError::dim(format!(
            "{} forward outputs for {} particles",
            outputs.len(),
            ens.size()
        )));
    }
    let m = outputs.first().map(|o| o.len()).unwrap_or(0);
    if outputs.iter().any(|o| o.len() != m) {
        return Err(SekiError::dim("forward outputs have unequal dimension"));
    }
    ens.cross_covariance(&DMatrix::from_columns(outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn ens(ps: &[DVector<f64>]) -> Ensemble {
        Ensemble::from_particles(ps).unwrap()
    }

    #[test]
    fn identical_particles_have_zero_covariance() {
        let e = ens(&[dvector![1.0, 2.0], dvector![1.0, 2.0], dvector![1.0, 2.0]]);
        let s = e.stats();
        assert_eq!(s.mean, dvector![1.0, 2.0]);
        assert_eq!(s.covariance, DMatrix::zeros(2, 2));
        assert_eq!(s.spread, 0.0);
    }

    #[test]
    fn scalar_pair() {
        let s = ens(&[dvector![0.0], dvector![2.0]]).stats();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.covariance[(0, 0)], 1.0);
        assert_eq!(s.spread, 1.0);
    }

    #[test]
    fn planar_pair() {
        let s = ens(&[dvector![1.0, 0.0], dvector![-1.0, 0.0]]).stats();
        assert_eq!(s.covariance, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.spread, 1.0);
    }

    #[test]
    fn rejects_single_particle_and_ragged_input() {
        assert!(Ensemble::from_particles(&[dvector![1.0]]).is_err());
        let err = Ensemble::from_particles(&[dvector![1.0], dvector![1.0, 2.0]]).unwrap_err();
        assert!(matches!(err, SekiError::Dimension(_)));
    }

    #[test]
    fn cross_covariance_examples() {
        let e = ens(&[dvector![3.0], dvector![3.0]]);
        let c = cross_covariance(&e, &[dvector![6.0], dvector![6.0]]).unwrap();
        assert_eq!(c.matrix[(0, 0)], 0.0);

        let e = ens(&[dvector![0.0], dvector![2.0]]);
        let c = cross_covariance(&e, &[dvector![0.0], dvector![4.0]]).unwrap();
        assert_eq!(c.matrix[(0, 0)], 2.0);
        assert_eq!(c.forward_mean[0], 2.0);

        let c = cross_covariance(&e, &[dvector![0.0, 0.0], dvector![2.0, -2.0]]).unwrap();
        assert_eq!(c.matrix, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));

        assert!(cross_covariance(&e, &[dvector![0.0]]).is_err());
    }

    #[test]
    fn factored_product_matches_dense() {
        let e = Ensemble::from_matrix(DMatrix::from_fn(4, 6, |i, j| (i as f64 + 1.0) * (j as f64).cos()))
            .unwrap();
        let s = e.stats();
        let v = dvector![1.0, -2.0, 0.5, 3.0];
        let diff = s.apply_covariance(&v) - &s.covariance * &v;
        assert!(diff.norm() < 1e-12);
        assert!((s.covariance.trace() - s.spread).abs() < 1e-12 * s.spread);
    }
}
