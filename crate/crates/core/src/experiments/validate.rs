//! Small-instance suite behind `--experiment validate`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::forward::{build_augmented, LinearModel};
use crate::linalg::eigen_extremes;
use crate::regularizer::Regularizer;
use crate::rng::SeedStream;
use crate::solver::{certified_step_sizes, run_hybrid, seki_step, SolverConfig, SolverMode, StepSchedule};
use crate::theory::{
    cauchy_scaling_check, collapse_rate_from_flow, collapse_rate_from_trace, covariance_closed_form_check,
    energy_increase, integrate_yosida_flow, mean_contraction_check, moreau_excess, CovarianceLaw,
    ValidationReport,
};

/// Augmented Gaussian instance: `A` is `(d+1) × d` with `N(0, 1/(d+1))` entries, `C0 = I`,
/// `Γ = I`, and the ensemble is `N(0.5, std²)`.
pub fn theory_instance(d: usize, j: usize, std: f64, seeds: &SeedStream) -> Result<(LinearModel, Ensemble)> {
    let mut rng = seeds.fork("instance");
    let m = d + 1;
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base = LinearModel::with_noise_std(a, 1.0, y)?;
    let model = build_augmented(base, DMatrix::identity(d, d))?.combined().clone();
    let ens = Ensemble::gaussian(&DVector::from_element(d, 0.5), std, j, &mut rng)?;
    Ok((model, ens))
}

/// Two-dimensional instance whose `0.5‖x‖₁` minimizer `(1.5, 0)` sits on a kink.
pub fn sparse_instance_2d() -> Result<LinearModel> {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 1.0]);
    LinearModel::with_noise_std(a, 1.0, DVector::from_vec(vec![2.0, 0.3]))
}

/// Ensemble of `j` particles with spread `std` and mean exactly at `mean`.
pub fn centred_ensemble(mean: &DVector<f64>, std: f64, j: usize, seeds: &SeedStream, tag: &str) -> Result<Ensemble> {
    let raw = Ensemble::gaussian(&DVector::zeros(mean.len()), std, j, &mut seeds.fork(tag))?;
    Ensemble::from_mean_and_deviations(mean, &raw.deviations())
}

/// Count of covariance-sandwich violations over `instances` random runs of `steps`
/// SEKI steps at the certified collapse step.
pub fn sandwich_violations(instances: usize, steps: usize, seeds: &SeedStream) -> Result<usize> {
    let mut violations = 0;
    for i in 0..instances {
        let s = seeds.child(&format!("sandwich{i}"));
        let mut rng = s.fork("size");
        let d = rng.random_range(1..=6);
        let j = d + 1 + rng.random_range(0..=6);
        let (model, mut ens) = theory_instance(d, j, 1.0, &s)?;
        let cert = certified_step_sizes(&model, &ens)?;
        let h = cert.h_collapse;
        let (su, sl) = (cert.sigma_u(h), cert.sigma_l(h));
        let reg = Regularizer::l1(0.3);
        for k in 0..=steps {
            let (lo, hi) = eigen_extremes(&ens.stats().covariance);
            let kp = (k + 1) as f64;
            if lo < sl / kp || hi > (su / kp).min(cert.e0) {
                violations += 1;
            }
            ens = seki_step(&ens, &model, &reg, h)?;
        }
    }
    Ok(violations)
}

/// Runs every continuous- and discrete-time check at its default size.
pub fn run_validation(seed: u64) -> Result<ValidationReport> {
    let seeds = SeedStream::new(seed);
    let mut report = ValidationReport::default();
    let l1 = Regularizer::l1(0.5);

    let (model, ens) = theory_instance(3, 8, 1.0, &seeds.child("closed_form"))?;
    let traj = integrate_yosida_flow(&ens, &model, &l1, 0.1, 5.0, 1e-3)?;
    let law = CovarianceLaw::from_ensemble(&ens, &model)?;
    report.at_most("covariance_closed_form", "max_rel_frobenius_error", covariance_closed_form_check(&traj, &law)?, 1e-5);
    report.at_most("energy_decay", "max_relative_increase", energy_increase(&traj, &model, &l1, 0.1)?, 1e-8);
    report.at_most("moreau_bound", "max_envelope_excess", moreau_excess(&traj, &l1, 0.1)?, 0.0);

    report.at_most("covariance_sandwich", "violations", sandwich_violations(20, 1000, &seeds)? as f64, 0.0);

    let (model, ens) = theory_instance(3, 8, 1.0, &seeds.child("collapse"))?;
    let cert = certified_step_sizes(&model, &ens)?;
    let cfg = SolverConfig::new(
        SolverMode::SekiMeanSubgradient,
        StepSchedule::Constant { h0: cert.h_collapse },
        20_000,
    );
    let slope = collapse_rate_from_trace(&run_hybrid(&cfg, &ens, &model, &l1, None)?)?;
    report.at_most("collapse_rate_discrete", "abs_slope_minus_one", (slope + 1.0).abs(), 0.15);
    let traj = integrate_yosida_flow(&ens, &model, &l1, 0.1, 50.0, 1e-3)?;
    let slope = collapse_rate_from_flow(&traj)?;
    report.at_most("collapse_rate_flow", "abs_slope_minus_one", (slope + 1.0).abs(), 0.15);

    let sparse = sparse_instance_2d()?;
    let ens = centred_ensemble(&DVector::from_vec(vec![1.5, 0.0]), 0.3, 4, &seeds, "cauchy")?;
    let cauchy = cauchy_scaling_check(&ens, &sparse, &l1, &[1e-1, 1e-2, 1e-3], 5.0, 1e-3)?;
    report.at_least("yosida_cauchy", "fitted_exponent", cauchy.exponent, 0.4);

    let ens = Ensemble::gaussian(&DVector::zeros(2), 0.5, 4, &mut seeds.fork("contraction"))?;
    let shift = DVector::from_vec(vec![1.0, -1.0]);
    let v = mean_contraction_check(&ens, &shift, &sparse, &l1, 0.05, 5.0, 1e-3)?;
    report.at_most("mean_contraction", "max_violation", v, 1e-6);
    Ok(report)
}
