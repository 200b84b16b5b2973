//! Mean-only baselines: subgradient descent and proximal gradient (ISTA).

use nalgebra::DVector;

use super::{base_header, Recorder, Reference, RunTrace, SolverConfig, StepSchedule};
use crate::error::{Result, SekiError};
use crate::forward::LinearModel;
use crate::regularizer::Regularizer;

fn check_start(x0: &DVector<f64>, model: &LinearModel) -> Result<()> {
    if x0.len() != model.dim() {
        return Err(SekiError::dim(format!(
            "initial point has length {}, model dimension is {}",
            x0.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// `x ← x − h_k (∇Φ(x) + g_x)`. A hybrid schedule runs with scale 1.
pub fn run_subgd(
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    model: &LinearModel,
    reg: &Regularizer,
    reference: Option<&Reference>,
) -> Result<RunTrace> {
    cfg.validate()?;
    reg.validate()?;
    check_start(x0, model)?;
    let mut trace = RunTrace::default();
    base_header(&mut trace, cfg, model, reg);
    let rec = Recorder::new(reg, reference, cfg.wall_clock);
    let mut x = x0.clone();
    for k in 0..cfg.iterations {
        let h = cfg.schedule.step(k, Some(1.0))?;
        let (misfit, grad) = model.misfit_value_and_gradient(&x)?;
        trace.records.push(rec.record(k, &x, misfit, None, None, k as u64 + 1)?);
        x -= (grad + reg.subgradient(&x)?) * h;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SekiError::Numerical("subgradient descent diverged".into()));
    }
    trace.final_iterate = x;
    Ok(trace)
}

fn ista_step_size(cfg: &SolverConfig, model: &LinearModel, reg: &Regularizer) -> Result<f64> {
    if !reg.has_prox() {
        return Err(SekiError::Unsupported(format!("no proximal map for {}", reg.describe())));
    }
    let h = match cfg.schedule {
        StepSchedule::Constant { h0 } => h0,
        _ => return Err(SekiError::invalid("schedule", "ISTA uses a constant step")),
    };
    let l = model.spectral_bounds().l;
    if h * l > 1.0 + 1e-12 {
        return Err(SekiError::invalid("h0", format!("ISTA needs h ≤ 1/L = {:e}, got {h:e}", 1.0 / l)));
    }
    Ok(h)
}

/// `x ← prox_{hR}(x − h∇Φ(x))` with constant `h ≤ 1/L`.
pub fn run_ista(
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    model: &LinearModel,
    reg: &Regularizer,
    reference: Option<&Reference>,
) -> Result<RunTrace> {
    cfg.validate()?;
    reg.validate()?;
    check_start(x0, model)?;
    let h = ista_step_size(cfg, model, reg)?;
    let mut trace = RunTrace::default();
    base_header(&mut trace, cfg, model, reg);
    let rec = Recorder::new(reg, reference, cfg.wall_clock);
    let mut x = x0.clone();
    let mut prev = f64::INFINITY;
    for k in 0..cfg.iterations {
        let (misfit, grad) = model.misfit_value_and_gradient(&x)?;
        let row = rec.record(k, &x, misfit, None, None, k as u64 + 1)?;
        if row.objective > prev + 1e-12 * (1.0 + prev.abs()) {
            return Err(SekiError::Numerical(format!(
                "ISTA objective increased at iteration {k}: {prev:e} -> {:e}",
                row.objective
            )));
        }
        prev = row.objective;
        trace.records.push(row);
        x = reg.prox(&(&x - grad * h), h)?;
    }
    trace.final_iterate = x;
    Ok(trace)
}

#[derive(Clone, Debug)]
pub struct IstaResult {
    pub x: DVector<f64>,
    /// `‖prox_{hR}(x − h∇Φ(x)) − x‖` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub objective: f64,
}

/// Runs ISTA until the fixed-point residual drops below `tol` or `max_iter` is hit.
pub fn ista_solve(
    model: &LinearModel,
    reg: &Regularizer,
    h: f64,
    x0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<IstaResult> {
    reg.validate()?;
    check_start(x0, model)?;
    let cfg = SolverConfig::new(super::SolverMode::Ista, StepSchedule::Constant { h0: h }, max_iter);
    let h = ista_step_size(&cfg, model, reg)?;
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = reg.prox(&(&x - model.misfit_gradient(&x)? * h), h)?;
        residual = (&next - &x).norm();
        x = next;
        iterations += 1;
        if residual <= tol {
            break;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SekiError::Numerical("ISTA diverged".into()));
    }
    let objective = model.misfit_value(&x)? + reg.value(&x)?;
    Ok(IstaResult {
        x,
        residual,
        iterations,
        objective,
    })
}
