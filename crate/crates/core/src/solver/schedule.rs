use serde::{Deserialize, Serialize};

use crate::error::{Result, SekiError};

/// How the phase-two step scale is derived at freeze time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTwoScale {
    /// `λ_max(C_{k_b−1}) · k_b`.
    #[default]
    Covariance,
    /// `k_b` alone.
    BurnIn,
}

/// Step-size rule `k ↦ h_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        h0: f64,
    },
    /// `h0 / (k+1)^p`.
    Polynomial {
        h0: f64,
        p: f64,
    },
    /// `h0` for `k < burn_in`, then `scale · h0 / (k+1)^p` with `scale` fixed when the
    /// covariance is frozen.
    Hybrid {
        h0: f64,
        p: f64,
        burn_in: usize,
        #[serde(default)]
        scale_rule: PhaseTwoScale,
    },
}

impl StepSchedule {
    pub fn h0(&self) -> f64 {
        match *self {
            StepSchedule::Constant { h0 } | StepSchedule::Polynomial { h0, .. } | StepSchedule::Hybrid { h0, .. } => h0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h0 = self.h0();
        if !(h0 > 0.0) || !h0.is_finite() {
            return Err(SekiError::invalid("h0", format!("step size must be positive, got {h0}")));
        }
        match *self {
            StepSchedule::Polynomial { p, .. } | StepSchedule::Hybrid { p, .. } if !(p >= 0.0) || !p.is_finite() => {
                Err(SekiError::invalid("p", format!("decay exponent must be nonnegative, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Step size at iteration `k`. Hybrid schedules need the frozen `scale` once
    /// `k ≥ burn_in`.
    pub fn step(&self, k: usize, scale: Option<f64>) -> Result<f64> {
        let kp = (k + 1) as f64;
        match *self {
            StepSchedule::Constant { h0 } => Ok(h0),
            StepSchedule::Polynomial { h0, p } => Ok(h0 / kp.powf(p)),
            StepSchedule::Hybrid { h0, burn_in, .. } if k < burn_in => Ok(h0),
            StepSchedule::Hybrid { h0, p, .. } => {
                let s = scale.ok_or_else(|| {
                    SekiError::invalid("schedule", "phase-two step requested before the covariance was frozen")
                })?;
                Ok(s * h0 / kp.powf(p))
            }
        }
    }

    pub fn burn_in(&self) -> Option<usize> {
        match *self {
            StepSchedule::Hybrid { burn_in, .. } => Some(burn_in),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            StepSchedule::Constant { h0 } => format!("constant(h0={h0:e})"),
            StepSchedule::Polynomial { h0, p } => format!("polynomial(h0={h0:e},p={p})"),
            StepSchedule::Hybrid {
                h0,
                p,
                burn_in,
                scale_rule,
            } => format!("hybrid(h0={h0:e},p={p},kb={burn_in},scale={scale_rule:?})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_steps() {
        let s = StepSchedule::Hybrid {
            h0: 0.5,
            p: 1.0,
            burn_in: 3,
            scale_rule: PhaseTwoScale::Covariance,
        };
        assert_eq!(s.step(2, None).unwrap(), 0.5);
        assert!(s.step(3, None).is_err());
        assert_eq!(s.step(3, Some(8.0)).unwrap(), 8.0 * 0.5 / 4.0);
    }

    #[test]
    fn polynomial_and_validation() {
        let s = StepSchedule::Polynomial { h0: 1.0, p: 0.5 };
        assert_eq!(s.step(3, None).unwrap(), 0.5);
        assert!(StepSchedule::Constant { h0: 0.0 }.validate().is_err());
        assert!(StepSchedule::Polynomial { h0: 1.0, p: -1.0 }.validate().is_err());
    }
}
