//! Discrete subgradient ensemble Kalman inversion, the hybrid covariance-freezing
//! scheme, and the mean-based baselines (subgradient descent, ISTA).

mod baseline;
mod certified;
mod schedule;
mod seki;
mod trace;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use baseline::{ista_solve, run_ista, run_subgd, IstaResult};
pub use certified::{certified_step_sizes, ergodic_certificate, CertifiedSteps};
pub use schedule::{PhaseTwoScale, StepSchedule};
pub use seki::{run_frozen, run_hybrid, run_hybrid_multi, seki_step, seki_step_particlewise, spread_recursion_check};
pub use trace::{fmt_f64, RunTrace, TraceRecord, TRACE_COLUMNS};

use crate::ensemble::Ensemble;
use crate::error::{Result, SekiError};
use crate::forward::LinearModel;
use crate::regularizer::Regularizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// One subgradient, evaluated at the ensemble mean, shared by all particles.
    SekiMeanSubgradient,
    /// Subgradient evaluated at every particle (experimental, no guarantees).
    SekiParticlewise,
    SubGd,
    Ista,
}

impl SolverMode {
    pub fn name(&self) -> &'static str {
        match self {
            SolverMode::SekiMeanSubgradient => "seki",
            SolverMode::SekiParticlewise => "seki_particlewise",
            SolverMode::SubGd => "subgd",
            SolverMode::Ista => "ista",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub schedule: StepSchedule,
    /// Total iteration count `K`.
    pub iterations: usize,
    /// Freeze the covariance after `schedule`'s burn-in (requires a hybrid schedule).
    #[serde(default)]
    pub freeze: bool,
    #[serde(default)]
    pub seed: u64,
    /// Covariance eigenvalues are traced every `trace_stride` iterations.
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
    /// Record elapsed wall time; off keeps traces byte-reproducible.
    #[serde(default)]
    pub wall_clock: bool,
}

fn default_stride() -> usize {
    10
}

impl SolverConfig {
    pub fn new(mode: SolverMode, schedule: StepSchedule, iterations: usize) -> Self {
        SolverConfig {
            mode,
            schedule,
            iterations,
            freeze: false,
            seed: 0,
            trace_stride: default_stride(),
            wall_clock: false,
        }
    }

    /// Hybrid SEKI with covariance freezing after `burn_in` steps.
    pub fn hybrid(h0: f64, p: f64, burn_in: usize, iterations: usize, scale_rule: PhaseTwoScale) -> Self {
        let mut cfg = Self::new(
            SolverMode::SekiMeanSubgradient,
            StepSchedule::Hybrid {
                h0,
                p,
                burn_in,
                scale_rule,
            },
            iterations,
        );
        cfg.freeze = true;
        cfg
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.trace_stride == 0 {
            return Err(SekiError::invalid("trace_stride", "must be positive"));
        }
        if let Some(kb) = self.schedule.burn_in() {
            if kb > self.iterations {
                return Err(SekiError::invalid(
                    "burn_in",
                    format!("k_b = {kb} exceeds the iteration budget K = {}", self.iterations),
                ));
            }
        }
        Ok(())
    }
}

/// Reference minimizer used for objective gaps and relative errors.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub x_star: DVector<f64>,
    /// `Φ_R(x*)`.
    pub objective: f64,
}

impl Reference {
    pub fn new(model: &LinearModel, reg: &Regularizer, x_star: DVector<f64>) -> Result<Self> {
        let objective = model.misfit_value(&x_star)? + reg.value(&x_star)?;
        Ok(Reference { x_star, objective })
    }
}

/// Static preconditioner `Ĉ` and cross matrix `Ĉ^{x,A}` stored at freeze time.
#[derive(Clone, Debug)]
pub struct FrozenPreconditioner {
    pub c_hat: DMatrix<f64>,
    /// `d × K` (augmented data dimension for augmented models).
    pub c_hat_xa: DMatrix<f64>,
}

impl FrozenPreconditioner {
    /// Empirical covariance and cross-covariance of `ens` under `model`.
    pub fn from_ensemble(ens: &Ensemble, model: &LinearModel) -> Result<Self> {
        if ens.dim() != model.dim() {
            return Err(SekiError::dim("ensemble and model dimensions differ"));
        }
        let stats = ens.stats();
        let outputs = model.a() * ens.particles();
        let cross = ens.cross_covariance(&outputs)?;
        Ok(FrozenPreconditioner {
            c_hat: stats.covariance,
            c_hat_xa: cross.matrix,
        })
    }

    /// Use a given covariance; the cross matrix follows from linearity, `C Aᵀ`.
    pub fn from_covariance(c: DMatrix<f64>, model: &LinearModel) -> Result<Self> {
        if c.nrows() != model.dim() || !c.is_square() {
            return Err(SekiError::dim("preconditioner size differs from state dimension"));
        }
        let c_hat_xa = &c * model.a().transpose();
        Ok(FrozenPreconditioner { c_hat: c, c_hat_xa })
    }
}

/// Builds trace rows: objective, gap and error against an optional reference.
pub(crate) struct Recorder<'a> {
    reg: &'a Regularizer,
    reference: Option<&'a Reference>,
    ref_norm: f64,
    clock: Option<Instant>,
    offset: f64,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(reg: &'a Regularizer, reference: Option<&'a Reference>, wall_clock: bool) -> Self {
        Recorder {
            reg,
            reference,
            ref_norm: reference.map_or(1.0, |r| r.x_star.norm()),
            clock: wall_clock.then(Instant::now),
            offset: 0.0,
        }
    }

    /// Continue timing from `offset` seconds.
    pub(crate) fn resume(&mut self, offset: f64) {
        self.offset = offset;
        if let Some(c) = self.clock.as_mut() {
            *c = Instant::now();
        }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        self.clock.map_or(0.0, |c| self.offset + c.elapsed().as_secs_f64())
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn record(
        &self,
        k: usize,
        x: &DVector<f64>,
        misfit: f64,
        lambdas: Option<(f64, f64)>,
        spread: Option<f64>,
        forward_evals: u64,
    ) -> Result<TraceRecord> {
        let objective = misfit + self.reg.value(x)?;
        if !objective.is_finite() {
            return Err(SekiError::Numerical(format!("non-finite objective at iteration {k}")));
        }
        let (objective_gap, rel_error) = match self.reference {
            Some(r) => {
                let denom = if self.ref_norm > 0.0 { self.ref_norm } else { 1.0 };
                (Some(objective - r.objective), Some((x - &r.x_star).norm() / denom))
            }
            None => (None, None),
        };
        Ok(TraceRecord {
            k,
            objective,
            objective_gap,
            rel_error,
            lambda_min: lambdas.map(|l| l.0),
            lambda_max: lambdas.map(|l| l.1),
            spread,
            forward_evals,
            wall_time: self.elapsed(),
        })
    }
}

pub(crate) fn base_header(trace: &mut RunTrace, cfg: &SolverConfig, model: &LinearModel, reg: &Regularizer) {
    trace.meta("seed", cfg.seed);
    trace.meta("mode", cfg.mode.name());
    trace.meta("schedule", cfg.schedule.describe());
    trace.meta("h0", cfg.schedule.h0());
    trace.meta("iterations", cfg.iterations);
    trace.meta("model", model.describe());
    trace.meta("regularizer", reg.describe());
}
