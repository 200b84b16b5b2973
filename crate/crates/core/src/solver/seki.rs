//! Ensemble update and the hybrid covariance-freezing driver.

use nalgebra::{DMatrix, DVector};

use super::{base_header, FrozenPreconditioner, PhaseTwoScale, Recorder, Reference, RunTrace, SolverConfig, SolverMode, StepSchedule, TraceRecord};
use crate::ensemble::{covariance_times, deviations_about, Ensemble};
use crate::error::{Result, SekiError};
use crate::forward::LinearModel;
use crate::linalg::gram_eigen_extremes;
use crate::regularizer::Regularizer;

fn check_inputs(ens: &Ensemble, model: &LinearModel, h: f64) -> Result<()> {
    if ens.dim() != model.dim() {
        return Err(SekiError::dim(format!(
            "ensemble dimension {} differs from model dimension {}",
            ens.dim(),
            model.dim()
        )));
    }
    if !(h >= 0.0) || !h.is_finite() {
        return Err(SekiError::invalid("h", format!("step size must be nonnegative and finite, got {h}")));
    }
    Ok(())
}

/// Quantities of the pre-update ensemble that the driver records.
struct StepInfo {
    mean: DVector<f64>,
    deviations: DMatrix<f64>,
    misfit: f64,
}

/// One in-place update. Forward evaluations are the `J` columns of `A X`.
fn advance(particles: &mut DMatrix<f64>, model: &LinearModel, reg: &Regularizer, h: f64, mode: SolverMode) -> Result<StepInfo> {
    let j = particles.ncols();
    let inv = 1.0 / j as f64;
    let mean = particles.column_mean();
    let e = deviations_about(particles, &mean);
    let ax = model.a() * &*particles;
    let a_mean = ax.column_mean();
    let ae = deviations_about(&ax, &a_mean);
    let mut resid = ax;
    for mut c in resid.column_iter_mut() {
        c -= model.y();
    }
    let w = model.gamma().solve_matrix(&resid);
    let misfit = model.value_from_residual(&(a_mean - model.y()));

    // C^{x,A} W = (1/J) E (AEᵀ W)
    let mut update = &e * (ae.tr_mul(&w) * inv);
    match mode {
        SolverMode::SekiParticlewise => {
            let mut g = DMatrix::zeros(particles.nrows(), j);
            for (k, col) in particles.column_iter().enumerate() {
                g.set_column(k, &reg.subgradient(&col.into_owned())?);
            }
            update += &e * (e.tr_mul(&g) * inv);
        }
        _ => {
            let cg = covariance_times(&e, &reg.subgradient(&mean)?);
            for mut c in update.column_iter_mut() {
                c += &cg;
            }
        }
    }
    *particles -= update * h;
    Ok(StepInfo {
        mean,
        deviations: e,
        misfit,
    })
}

/// One SEKI step with the subgradient taken at the ensemble mean.
pub fn seki_step(ens: &Ensemble, model: &LinearModel, reg: &Regularizer, h: f64) -> Result<Ensemble> {
    check_inputs(ens, model, h)?;
    let mut x = ens.particles().clone();
    advance(&mut x, model, reg, h, SolverMode::SekiMeanSubgradient)?;
    Ensemble::from_matrix(x)
}

/// One step with subgradients evaluated at every particle.
pub fn seki_step_particlewise(ens: &Ensemble, model: &LinearModel, reg: &Regularizer, h: f64) -> Result<Ensemble> {
    check_inputs(ens, model, h)?;
    let mut x = ens.particles().clone();
    advance(&mut x, model, reg, h, SolverMode::SekiParticlewise)?;
    Ensemble::from_matrix(x)
}

/// Deviations after one step as predicted by `e ↦ e − h C S e`.
pub fn spread_recursion_check(ens: &Ensemble, model: &LinearModel, h: f64) -> Result<DMatrix<f64>> {
    check_inputs(ens, model, h)?;
    let e = ens.deviations();
    let se = model.a().tr_mul(&model.gamma().solve_matrix(&(model.a() * &e)));
    let cse = &e * (e.tr_mul(&se) / ens.size() as f64);
    Ok(e - cse * h)
}

/// Hybrid SEKI: ensemble phase for `burn_in` steps, then the mean under the frozen
/// preconditioner. Without `freeze` the ensemble phase runs for all `K` steps.
pub fn run_hybrid(
    cfg: &SolverConfig,
    ens0: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    reference: Option<&Reference>,
) -> Result<RunTrace> {
    let kb = match (cfg.freeze, cfg.schedule.burn_in()) {
        (true, Some(kb)) => kb,
        (true, None) => return Err(SekiError::invalid("schedule", "freezing requires a hybrid schedule")),
        (false, Some(_)) => {
            return Err(SekiError::invalid("freeze", "a hybrid schedule needs freeze = true"));
        }
        (false, None) => cfg.iterations,
    };
    let mut out = run_hybrid_multi(cfg, ens0, model, reg, reference, &[kb])?;
    Ok(out.remove(0))
}

struct Snapshot {
    kb: usize,
    particles: DMatrix<f64>,
    lambda_prev: f64,
    elapsed: f64,
}

/// Runs the hybrid scheme for each burn-in length in `burn_ins`, sharing the common
/// ensemble phase. Each trace equals the one `run_hybrid` would produce with that
/// `k_b` (wall times aside). The schedule's own burn-in is ignored.
pub fn run_hybrid_multi(
    cfg: &SolverConfig,
    ens0: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    reference: Option<&Reference>,
    burn_ins: &[usize],
) -> Result<Vec<RunTrace>> {
    cfg.validate()?;
    reg.validate()?;
    if !matches!(cfg.mode, SolverMode::SekiMeanSubgradient | SolverMode::SekiParticlewise) {
        return Err(SekiError::invalid("mode", "ensemble driver needs a SEKI mode"));
    }
    check_inputs(ens0, model, cfg.schedule.h0())?;
    let big_k = cfg.iterations;
    for &kb in burn_ins {
        if kb > big_k {
            return Err(SekiError::invalid("burn_in", format!("k_b = {kb} exceeds K = {big_k}")));
        }
        if kb == 0 {
            return Err(SekiError::invalid(
                "burn_in",
                "k_b = 0 needs a supplied covariance; use run_frozen",
            ));
        }
    }
    let k_max = burn_ins.iter().copied().max().unwrap_or(0);
    let j = ens0.size() as u64;
    let stride = cfg.trace_stride;
    let is_end = |k: usize| burn_ins.contains(&(k + 1));

    let recorder = Recorder::new(reg, reference, cfg.wall_clock);
    let mut particles = ens0.particles().clone();
    let mut shared: Vec<TraceRecord> = Vec::with_capacity(k_max);
    let mut snaps: Vec<Snapshot> = Vec::new();
    for k in 0..k_max {
        let h = match cfg.schedule {
            StepSchedule::Hybrid { h0, .. } => h0,
            schedule => schedule.step(k, None)?,
        };
        let info = advance(&mut particles, model, reg, h, cfg.mode)?;
        let lambdas = (k % stride == 0 || is_end(k)).then(|| gram_eigen_extremes(&info.deviations));
        let spread = info.deviations.norm_squared() / j as f64;
        shared.push(recorder.record(k, &info.mean, info.misfit, lambdas, Some(spread), (k as u64 + 1) * j)?);
        if is_end(k) {
            snaps.push(Snapshot {
                kb: k + 1,
                particles: particles.clone(),
                lambda_prev: lambdas.map_or(f64::NAN, |l| l.1),
                elapsed: recorder.elapsed(),
            });
        }
    }
    if particles.iter().any(|v| !v.is_finite()) {
        return Err(SekiError::Numerical("ensemble diverged".into()));
    }

    let mut traces = Vec::with_capacity(burn_ins.len());
    for &kb in burn_ins {
        let snap = snaps.iter().find(|s| s.kb == kb).expect("snapshot for every burn-in");
        let mut cfg = cfg.clone();
        if let StepSchedule::Hybrid { burn_in, .. } = &mut cfg.schedule {
            *burn_in = kb;
        }
        let cfg = &cfg;
        let mut trace = RunTrace::default();
        base_header(&mut trace, cfg, model, reg);
        trace.meta("ensemble_size", j);
        trace.meta("burn_in", kb);
        trace.records = shared[..kb]
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if r.k % stride != 0 && r.k + 1 != kb {
                    r.lambda_min = None;
                    r.lambda_max = None;
                }
                r
            })
            .collect();
        let ens = Ensemble::from_matrix(snap.particles.clone())?;
        let mean = ens.mean();
        if kb < big_k {
            let scale = match cfg.schedule {
                StepSchedule::Hybrid {
                    scale_rule: PhaseTwoScale::BurnIn,
                    ..
                } => kb as f64,
                _ => snap.lambda_prev * kb as f64,
            };
            trace.meta("phase_two_scale", scale);
            trace.frozen_scale = Some(scale);
            let pre = FrozenPreconditioner::from_ensemble(&ens, model)?;
            let mut rec = Recorder::new(reg, reference, cfg.wall_clock);
            rec.resume(snap.elapsed);
            trace.final_iterate = mean_phase(
                cfg,
                &pre,
                model,
                reg,
                &rec,
                mean,
                kb,
                Some(scale),
                kb as u64 * j,
                &mut trace.records,
            )?;
        } else {
            trace.final_iterate = mean;
        }
        traces.push(trace);
    }
    Ok(traces)
}

/// Mean iteration `x ← x − h_k (Ĉ^{x,A} Γ⁻¹(Ax − y) + Ĉ g_x)` for `k = start..K`.
#[allow(clippy::too_many_arguments)]
fn mean_phase(
    cfg: &SolverConfig,
    pre: &FrozenPreconditioner,
    model: &LinearModel,
    reg: &Regularizer,
    rec: &Recorder<'_>,
    mut x: DVector<f64>,
    start: usize,
    scale: Option<f64>,
    mut evals: u64,
    records: &mut Vec<TraceRecord>,
) -> Result<DVector<f64>> {
    for k in start..cfg.iterations {
        let h = cfg.schedule.step(k, scale)?;
        let r = model.a() * &x - model.y();
        let misfit = model.value_from_residual(&r);
        evals += 1;
        records.push(rec.record(k, &x, misfit, None, None, evals)?);
        let dir = &pre.c_hat_xa * model.gamma().solve(&r) + &pre.c_hat * reg.subgradient(&x)?;
        x -= dir * h;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(SekiError::Numerical("mean iteration diverged".into()));
    }
    Ok(x)
}

/// Static preconditioned subgradient method from step 0 with a supplied preconditioner.
/// A hybrid schedule uses scale 1 throughout.
pub fn run_frozen(
    cfg: &SolverConfig,
    x0: &DVector<f64>,
    pre: &FrozenPreconditioner,
    model: &LinearModel,
    reg: &Regularizer,
    reference: Option<&Reference>,
) -> Result<RunTrace> {
    cfg.validate()?;
    reg.validate()?;
    if x0.len() != model.dim() || pre.c_hat.nrows() != model.dim() || pre.c_hat_xa.ncols() != model.data_dim() {
        return Err(SekiError::dim("initial point or preconditioner does not match the model"));
    }
    let mut trace = RunTrace::default();
    base_header(&mut trace, cfg, model, reg);
    trace.meta("burn_in", 0);
    let rec = Recorder::new(reg, reference, cfg.wall_clock);
    let scale = cfg.schedule.burn_in().map(|_| 1.0);
    trace.frozen_scale = scale;
    trace.final_iterate = mean_phase(cfg, pre, model, reg, &rec, x0.clone(), 0, scale, 0, &mut trace.records)?;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::NoiseCovariance;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn scalar_model() -> LinearModel {
        LinearModel::with_noise_std(DMatrix::from_element(1, 1, 1.0), 1.0, DVector::zeros(1)).unwrap()
    }

    #[test]
    fn hand_example() {
        let ens = Ensemble::from_matrix(DMatrix::from_row_slice(1, 2, &[0.0, 2.0])).unwrap();
        let next = seki_step(&ens, &scalar_model(), &Regularizer::zero(), 0.1).unwrap();
        assert!((next.particles()[0] - 0.0).abs() < 1e-15);
        assert!((next.particles()[1] - 1.8).abs() < 1e-15);
        let pred = spread_recursion_check(&ens, &scalar_model(), 0.1).unwrap();
        assert!((pred[0] + 0.9).abs() < 1e-15 && (pred[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn collapsed_and_zero_step_are_identity() {
        let model = scalar_model();
        let reg = Regularizer::l1(1.0);
        let flat = Ensemble::from_matrix(DMatrix::from_element(1, 3, 1.5)).unwrap();
        assert_eq!(seki_step(&flat, &model, &reg, 0.7).unwrap(), flat);
        let ens = Ensemble::from_matrix(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 4.0])).unwrap();
        assert_eq!(seki_step(&ens, &model, &reg, 0.0).unwrap(), ens);
        assert!(seki_step(&ens, &model, &reg, -1.0).is_err());
    }

    #[test]
    fn deviations_follow_recursion() {
        let mut rng = SeedStream::new(3).fork("dev");
        let a = DMatrix::from_fn(5, 4, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let model = LinearModel::new(a, NoiseCovariance::isotropic(5, 0.3).unwrap(), y).unwrap();
        let ens = Ensemble::gaussian(&DVector::zeros(4), 1.0, 8, &mut rng).unwrap();
        let next = seki_step(&ens, &model, &Regularizer::l1(0.5), 0.05).unwrap();
        let pred = spread_recursion_check(&ens, &model, 0.05).unwrap();
        assert!((next.deviations() - pred).amax() < 1e-12);
    }

    #[test]
    fn burn_in_bounds() {
        let model = scalar_model();
        let ens = Ensemble::from_matrix(DMatrix::from_row_slice(1, 2, &[0.0, 2.0])).unwrap();
        let reg = Regularizer::zero();
        let bad = SolverConfig::hybrid(0.1, 0.6, 11, 10, PhaseTwoScale::Covariance);
        assert!(run_hybrid(&bad, &ens, &model, &reg, None).is_err());
        let zero = SolverConfig::hybrid(0.1, 0.6, 0, 10, PhaseTwoScale::Covariance);
        assert!(run_hybrid(&zero, &ens, &model, &reg, None).is_err());
        let full = SolverConfig::hybrid(0.1, 0.6, 10, 10, PhaseTwoScale::Covariance);
        let t = run_hybrid(&full, &ens, &model, &reg, None).unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t.total_forward_evals(), 20);
        assert!(t.frozen_scale.is_none());
    }
}
