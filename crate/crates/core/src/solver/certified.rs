//! Step-size bounds under which the discrete covariance estimates hold, and the
//! averaged quantity of the ergodic convergence estimate.

use nalgebra::DVector;

use super::RunTrace;
use crate::ensemble::Ensemble;
use crate::error::{Result, SekiError};
use crate::forward::LinearModel;
use crate::linalg::eigen_extremes;
use crate::regularizer::Regularizer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedSteps {
    pub mu: f64,
    pub l: f64,
    pub ensemble_size: usize,
    /// Initial spread `E₀`.
    pub e0: f64,
    /// `λ_min(C₀)`.
    pub sigma0: f64,
    pub lambda_max0: f64,
    /// `min(μ/(JL²), J/μ, 1/(2L)) / E₀`.
    pub h_collapse: f64,
    /// `μ / (4 L² λ_max(C₀))`.
    pub h_converge: f64,
}

impl CertifiedSteps {
    /// Upper constant `J / (hμ)` of the `1/(k+1)` envelope.
    pub fn sigma_u(&self, h: f64) -> f64 {
        self.ensemble_size as f64 / (h * self.mu)
    }

    /// Lower constant `σ₀ / (1 + 2hLσ₀)`.
    pub fn sigma_l(&self, h: f64) -> f64 {
        self.sigma0 / (1.0 + 2.0 * h * self.l * self.sigma0)
    }

    /// Bound on `‖C_{k+1} − C_k‖_F`.
    pub fn increment_bound(&self, h: f64, k: usize) -> f64 {
        let (l, mu, j) = (self.l, self.mu, self.ensemble_size as f64);
        (2.0 * l * j * j / (h * mu * mu) + l * l * j.powi(3) / (h * mu.powi(3))) / ((k + 1) as f64).powi(2)
    }
}

pub fn certified_step_sizes(model: &LinearModel, ens0: &Ensemble) -> Result<CertifiedSteps> {
    if ens0.dim() != model.dim() {
        return Err(SekiError::dim("ensemble and model dimensions differ"));
    }
    let e0 = ens0.spread();
    if !(e0 > 0.0) {
        return Err(SekiError::invalid("ens0", "ensemble has zero spread"));
    }
    let bounds = model.spectral_bounds();
    let (mu, l) = (bounds.mu, bounds.l);
    if !(mu > 0.0) {
        return Err(SekiError::invalid("model", format!("S must be positive definite, smallest eigenvalue {mu:e}")));
    }
    let (sigma0, lambda_max0) = eigen_extremes(&ens0.stats().covariance);
    let j = ens0.size() as f64;
    let h_collapse = (mu / (j * l * l)).min(j / mu).min(1.0 / (2.0 * l)) / e0;
    Ok(CertifiedSteps {
        mu,
        l,
        ensemble_size: ens0.size(),
        e0,
        sigma0: sigma0.max(0.0),
        lambda_max0,
        h_collapse,
        h_converge: mu / (4.0 * l * l * lambda_max0),
    })
}

/// Running averages of `2h(Φ_R(x̄_k) − Φ_R(x*)) + μ²/(16L²) ‖x̄_k − x*‖²` over
/// `k = k0..K−1`; entry `i` is the average for `K = k0 + 1 + i`. The step `h` is read
/// from the trace header and the distance from the relative-error column.
pub fn ergodic_certificate(
    trace: &RunTrace,
    model: &LinearModel,
    reg: &Regularizer,
    x_star: &DVector<f64>,
    k0: usize,
) -> Result<Vec<f64>> {
    if k0 >= trace.len() {
        return Err(SekiError::invalid("k0", format!("k0 = {k0} must be below the trace length {}", trace.len())));
    }
    let h: f64 = trace
        .meta_value("h0")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| SekiError::invalid("trace", "header lacks a step size h0"))?;
    let bounds = model.spectral_bounds();
    let weight = bounds.mu * bounds.mu / (16.0 * bounds.l * bounds.l);
    let f_star = model.misfit_value(x_star)? + reg.value(x_star)?;
    let norm = if x_star.norm() > 0.0 { x_star.norm() } else { 1.0 };
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(trace.len() - k0);
    for (i, r) in trace.records[k0..].iter().enumerate() {
        let rel = r
            .rel_error
            .ok_or_else(|| SekiError::invalid("trace", format!("row {} has no relative error", r.k)))?;
        let dist = rel * norm;
        sum += 2.0 * h * (r.objective - f_star) + weight * dist * dist;
        out.push(sum / (i + 1) as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn hand_bounds() {
        let model = LinearModel::with_noise_std(DMatrix::identity(1, 1), 1.0, DVector::zeros(1)).unwrap();
        // four particles at ±1 give E₀ = 1 and C₀ = 1
        let ens = Ensemble::from_matrix(DMatrix::from_row_slice(1, 4, &[-1.0, 1.0, -1.0, 1.0])).unwrap();
        let c = certified_step_sizes(&model, &ens).unwrap();
        assert!((c.h_collapse - 0.25).abs() < 1e-15);
        assert!((c.h_converge - 0.25).abs() < 1e-15);
        assert!((c.sigma_u(0.1) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rejected() {
        let model = LinearModel::with_noise_std(DMatrix::identity(1, 1), 1.0, DVector::zeros(1)).unwrap();
        let ens = Ensemble::from_matrix(DMatrix::from_element(1, 3, 2.0)).unwrap();
        assert!(certified_step_sizes(&model, &ens).is_err());
    }
}
