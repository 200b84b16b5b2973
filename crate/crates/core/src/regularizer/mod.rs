//! Convex, nonnegative regularization functionals with a deterministic subgradient
//! selection, proximal map, Moreau envelope and Yosida approximation.

mod tv;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use tv::TvProxOptions;

use crate::error::{Result, SekiError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    /// `(w/2) ‖x‖²`.
    Tikhonov { weight: f64 },
    /// `α ‖x‖₁`.
    L1 { alpha: f64 },
    /// `α Σ (|x[i+1,j] − x[i,j]| + |x[i,j+1] − x[i,j]|)` on a row-major image.
    Tv2d { alpha: f64, rows: usize, cols: usize },
    Sum { parts: Vec<Regularizer> },
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Regularizer {
    /// `R ≡ 0`.
    pub fn zero() -> Self {
        Regularizer::Sum { parts: Vec::new() }
    }

    pub fn tikhonov(weight: f64) -> Self {
        Regularizer::Tikhonov { weight }
    }

    pub fn l1(alpha: f64) -> Self {
        Regularizer::L1 { alpha }
    }

    pub fn tv2d(alpha: f64, rows: usize, cols: usize) -> Self {
        Regularizer::Tv2d { alpha, rows, cols }
    }

    pub fn sum(parts: Vec<Regularizer>) -> Self {
        Regularizer::Sum { parts }
    }

    /// Reject negative weights (which would break convexity or `R ≥ 0`).
    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::Tikhonov { weight } if !(*weight >= 0.0) => {
                Err(SekiError::invalid("tikhonov weight", format!("{weight} is negative")))
            }
            Regularizer::L1 { alpha } | Regularizer::Tv2d { alpha, .. } if !(*alpha >= 0.0) => {
                Err(SekiError::invalid("alpha", format!("{alpha} is negative")))
            }
            Regularizer::Sum { parts } => parts.iter().try_for_each(|p| p.validate()),
            _ => Ok(()),
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        match self {
            Regularizer::Tv2d { rows, cols, .. } if rows * cols != x.len() => Err(SekiError::dim(format!(
                "TV expects a {rows}x{cols} image ({} entries), got {}",
                rows * cols,
                x.len()
            ))),
            Regularizer::Sum { parts } => parts.iter().try_for_each(|p| p.check_dim(x)),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Tikhonov { weight } => 0.5 * weight * x.norm_squared(),
            Regularizer::L1 { alpha } => alpha * x.lp_norm(1),
            Regularizer::Tv2d { alpha, rows, cols } => alpha * tv::value(x, *rows, *cols),
            Regularizer::Sum { parts } => parts.iter().map(|p| p.value_unchecked(x)).sum(),
        }
    }

    /// Deterministic element of `∂R(x)`: `α·sign(xᵢ)` with `sign(0) = 0` for ℓ1,
    /// `Dᵀ sign(Dx)` with the same tie rule for TV, the gradient for Tikhonov.
    pub fn subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(self.subgradient_unchecked(x))
    }

    fn subgradient_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Regularizer::Tikhonov { weight } => x * *weight,
            Regularizer::L1 { alpha } => x.map(|v| alpha * sign(v)),
            Regularizer::Tv2d { alpha, rows, cols } => tv::subgradient(x, *rows, *cols) * *alpha,
            Regularizer::Sum { parts } => parts
                .iter()
                .fold(DVector::zeros(x.len()), |acc, p| acc + p.subgradient_unchecked(x)),
        }
    }

    /// Uniform bound `M ≥ ‖g‖` on the selected subgradients in dimension `d`, when one
    /// exists (Tikhonov has none unless its weight is zero).
    pub fn subgradient_bound(&self, d: usize) -> Option<f64> {
        let root = (d as f64).sqrt();
        match self {
            Regularizer::Tikhonov { weight } => (*weight == 0.0).then_some(0.0),
            Regularizer::L1 { alpha } => Some(alpha * root),
            // each pixel enters at most four differences
            Regularizer::Tv2d { alpha, .. } => Some(4.0 * alpha * root),
            Regularizer::Sum { parts } => parts.iter().map(|p| p.subgradient_bound(d)).sum(),
        }
    }

    /// Flatten nested sums into (total Tikhonov weight, remaining terms).
    fn split_tikhonov(&self) -> (f64, Vec<&Regularizer>) {
        match self {
            Regularizer::Tikhonov { weight } => (*weight, Vec::new()),
            Regularizer::Sum { parts } => {
                let mut w = 0.0;
                let mut rest = Vec::new();
                for p in parts {
                    let (pw, pr) = p.split_tikhonov();
                    w += pw;
                    rest.extend(pr);
                }
                (w, rest)
            }
            other => (0.0, vec![other]),
        }
    }

    pub fn has_prox(&self) -> bool {
        self.split_tikhonov().1.len() <= 1
    }

    /// `argmin_z R(z) + ‖z − x‖² / (2τ)`.
    pub fn prox(&self, x: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        self.prox_with(x, tau, TvProxOptions::default())
    }

    pub fn prox_with(&self, x: &DVector<f64>, tau: f64, opts: TvProxOptions) -> Result<DVector<f64>> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SekiError::invalid("tau", format!("must be positive, got {tau}")));
        }
        self.check_dim(x)?;
        let (w, rest) = self.split_tikhonov();
        if rest.len() > 1 {
            return Err(SekiError::Unsupported(
                "proximal map of a sum with more than one non-quadratic term".into(),
            ));
        }
        // prox of R + (w/2)‖·‖² at x is prox of τ'R at x/(1+τw), τ' = τ/(1+τw)
        let shrink = 1.0 + tau * w;
        let centre = x / shrink;
        let tau = tau / shrink;
        Ok(match rest.first() {
            None => centre,
            Some(Regularizer::L1 { alpha }) => {
                let t = tau * alpha;
                centre.map(|v| sign(v) * (v.abs() - t).max(0.0))
            }
            Some(Regularizer::Tv2d { alpha, rows, cols }) => tv::prox(&centre, *alpha, tau, *rows, *cols, opts),
            Some(_) => unreachable!("split_tikhonov returns only non-quadratic leaves"),
        })
    }

    /// `R_τ(x) = R(p) + ‖x − p‖² / (2τ)` with `p = prox_{τR}(x)`.
    pub fn moreau_envelope(&self, x: &DVector<f64>, tau: f64) -> Result<f64> {
        let p = self.prox(x, tau)?;
        Ok(self.value_unchecked(&p) + (x - &p).norm_squared() / (2.0 * tau))
    }

    /// `A_τ(x) = (x − prox_{τR}(x)) / τ`, the gradient of the Moreau envelope.
    pub fn yosida(&self, x: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        let p = self.prox(x, tau)?;
        Ok((x - p) / tau)
    }

    pub fn describe(&self) -> String {
        match self {
            Regularizer::Tikhonov { weight } => format!("tikhonov({weight})"),
            Regularizer::L1 { alpha } => format!("l1({alpha})"),
            Regularizer::Tv2d { alpha, rows, cols } => format!("tv2d({alpha},{rows}x{cols})"),
            Regularizer::Sum { parts } if parts.is_empty() => "zero".into(),
            Regularizer::Sum { parts } => {
                let p: Vec<String> = parts.iter().map(|p| p.describe()).collect();
                format!("sum[{}]", p.join("+"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn kinds() -> Vec<Regularizer> {
        vec![
            Regularizer::tikhonov(0.7),
            Regularizer::l1(0.3),
            Regularizer::tv2d(0.2, 2, 2),
            Regularizer::sum(vec![Regularizer::tikhonov(0.1), Regularizer::tv2d(0.5, 2, 2)]),
        ]
    }

    #[test]
    fn zero_at_origin() {
        for r in kinds() {
            let x = DVector::zeros(4);
            assert_eq!(r.value(&x).unwrap(), 0.0);
            assert_eq!(r.prox(&x, 0.8).unwrap(), x);
            assert_eq!(r.yosida(&x, 0.8).unwrap(), x);
        }
        assert_eq!(Regularizer::zero().value(&dvector![3.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_values() {
        let tv = Regularizer::tv2d(1.0, 2, 2);
        assert_eq!(tv.value(&dvector![0.0, 1.0, 0.0, 1.0]).unwrap(), 2.0);
        let l1 = Regularizer::l1(0.05);
        assert!((l1.value(&dvector![1.0, -2.0, 0.0]).unwrap() - 0.15).abs() < 1e-15);
        assert!(tv.value(&dvector![1.0, 2.0]).is_err());
    }

    #[test]
    fn l1_selection_rule() {
        let l1 = Regularizer::l1(1.0);
        assert_eq!(l1.subgradient(&dvector![0.0, 0.0]).unwrap(), dvector![0.0, 0.0]);
        assert_eq!(l1.subgradient(&dvector![3.0, -0.5]).unwrap(), dvector![1.0, -1.0]);
    }

    #[test]
    fn prox_closed_forms() {
        assert_eq!(Regularizer::l1(1.0).prox(&dvector![2.0], 0.5).unwrap()[0], 1.5);
        assert_eq!(Regularizer::tikhonov(1.0).prox(&dvector![2.0, -2.0], 1.0).unwrap(), dvector![1.0, -1.0]);
        // tikhonov + l1 composition: argmin |z| + z²/2 + (z − 3)²/2 = 1
        let r = Regularizer::sum(vec![Regularizer::l1(1.0), Regularizer::tikhonov(1.0)]);
        assert!((r.prox(&dvector![3.0], 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn prox_errors() {
        let l1 = Regularizer::l1(1.0);
        assert!(matches!(l1.prox(&dvector![1.0], 0.0), Err(SekiError::Invalid { .. })));
        assert!(l1.prox(&dvector![1.0], -1.0).is_err());
        let both = Regularizer::sum(vec![Regularizer::l1(1.0), Regularizer::tv2d(1.0, 1, 1)]);
        assert!(!both.has_prox());
        assert!(matches!(both.prox(&dvector![1.0], 1.0), Err(SekiError::Unsupported(_))));
    }

    #[test]
    fn yosida_example() {
        let l1 = Regularizer::l1(1.0);
        let x = dvector![2.0];
        assert_eq!(l1.prox(&x, 1.0).unwrap()[0], 1.0);
        let a = l1.yosida(&x, 1.0).unwrap();
        assert_eq!(a[0], 1.0);
        // 1 ∈ ∂|·|(1) = {1}
        assert_eq!(l1.subgradient(&dvector![1.0]).unwrap()[0], a[0]);
    }

    #[test]
    fn subgradient_bounds() {
        assert_eq!(Regularizer::l1(2.0).subgradient_bound(4), Some(4.0));
        assert_eq!(Regularizer::tikhonov(1.0).subgradient_bound(4), None);
        assert_eq!(Regularizer::zero().subgradient_bound(4), Some(0.0));
    }

    #[test]
    fn serde_shape() {
        let r = Regularizer::sum(vec![Regularizer::tikhonov(0.01), Regularizer::tv2d(0.1, 4, 4)]);
        let s = serde_json::to_string(&r).unwrap();
        let back: Regularizer = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(Regularizer::l1(-1.0).validate().is_err());
    }
}
