//! Config-driven CT and compressed-sensing experiments, the theory validation
//! suite, and their CSV outputs.

mod config;
mod figures;
mod phantom;
mod reference;
mod validate;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

pub use config::{CsConfig, CtConfig, ExperimentConfig, ExperimentKind, Resolved, SolverName};
pub use figures::{reproduce_figures, write_figures};
pub use phantom::phantom;
pub use reference::{compute_reference, content_hash, ReferenceMethod, ReferenceSolution};
pub use validate::{centred_ensemble, run_validation, sandwich_violations, sparse_instance_2d, theory_instance};

use crate::ensemble::Ensemble;
use crate::error::{Result, SekiError};
use crate::forward::{
    build_augmented_with, build_correlated_sensing, build_radon, generate_sparse_truth, observe, AugmentedModel,
    LinearModel, NoiseCovariance, RadonGeometry,
};
use crate::regularizer::Regularizer;
use crate::rng::SeedStream;
use crate::solver::{
    fmt_f64, run_hybrid_multi, run_ista, run_subgd, Reference, RunTrace, SolverConfig, SolverMode, StepSchedule,
};
use crate::theory::ValidationReport;

pub const SUMMARY_COLUMNS: &str =
    "experiment,rho,solver,burn_in,iterations,final_objective,final_objective_gap,final_rel_error,forward_evals,wall_time_s";

pub struct CtProblem {
    pub geometry: RadonGeometry,
    pub truth: DVector<f64>,
    /// Radon model augmented with the Tikhonov prior `C0 = I / α₁`.
    pub model: AugmentedModel,
    pub reg: Regularizer,
}

pub fn build_ct_problem(ct: &CtConfig, seeds: &SeedStream) -> Result<CtProblem> {
    let geometry = RadonGeometry::new(ct.n, ct.angles, ct.bins)?;
    let a = build_radon(ct.n, ct.angles, ct.bins)?;
    let truth = phantom(ct.n, ct.phantom_jitter, &mut seeds.fork("ct.phantom"));
    let y = observe(&a, &truth, ct.sigma, &mut seeds.fork("ct.noise"))?;
    let base = LinearModel::with_noise_std(a, if ct.weighted_misfit { ct.sigma } else { 1.0 }, y)?;
    let d = ct.n * ct.n;
    let model = build_augmented_with(base, NoiseCovariance::isotropic(d, 1.0 / ct.alpha_tikhonov)?)?;
    Ok(CtProblem {
        geometry,
        truth,
        model,
        reg: Regularizer::tv2d(ct.alpha_tv, ct.n, ct.n),
    })
}

pub struct CsProblem {
    pub rho: f64,
    pub truth: DVector<f64>,
    pub model: LinearModel,
    pub reg: Regularizer,
}

/// Truth, base Gaussian draws and noise come from seed streams that do not depend on
/// `rho`, so every correlation level shares them.
pub fn build_cs_problem(cs: &CsConfig, rho: f64, seeds: &SeedStream) -> Result<CsProblem> {
    let truth = generate_sparse_truth(cs.d, cs.sparsity, &mut seeds.fork("cs.truth"))?;
    let a = build_correlated_sensing(cs.measurements, cs.d, rho, &mut seeds.fork("cs.sensing"))?;
    let y = observe(&a, &truth, cs.sigma, &mut seeds.fork("cs.noise"))?;
    let model = LinearModel::new(a, NoiseCovariance::isotropic(cs.measurements, 1.0)?, y)?;
    Ok(CsProblem {
        rho,
        truth,
        model,
        reg: Regularizer::l1(cs.alpha),
    })
}

/// Configured `h0`, or `h0_factor / λ_max(S)`.
pub fn initial_step(cfg: &ExperimentConfig, model: &LinearModel) -> f64 {
    cfg.h0.unwrap_or_else(|| cfg.h0_factor / model.spectral_bounds().l)
}

pub fn initial_ensemble(cfg: &ExperimentConfig, d: usize, size: usize, seeds: &SeedStream, tag: &str) -> Result<Ensemble> {
    Ensemble::gaussian(&DVector::zeros(d), cfg.init_std, size, &mut seeds.fork(&format!("{tag}.ensemble")))
}

#[derive(Clone, Debug)]
pub struct SolverRun {
    pub solver: SolverName,
    /// Burn-in length for SEKI-f, `None` for the baselines.
    pub burn_in: Option<usize>,
    pub trace: RunTrace,
}

impl SolverRun {
    pub fn file_name(&self) -> String {
        format!("trace_{}_{}.csv", self.solver.as_str(), self.burn_in.unwrap_or(0))
    }
}

#[derive(Clone, Debug)]
pub struct ProblemOutcome {
    pub experiment: ExperimentKind,
    pub rho: Option<f64>,
    pub reference: ReferenceSolution,
    pub runs: Vec<SolverRun>,
}

impl ProblemOutcome {
    /// Subdirectory holding this problem's traces (empty for CT).
    pub fn subdir(&self) -> String {
        self.rho.map(|r| format!("rho_{r}")).unwrap_or_default()
    }

    pub fn run(&self, solver: SolverName, burn_in: Option<usize>) -> Option<&SolverRun> {
        self.runs.iter().find(|r| r.solver == solver && r.burn_in == burn_in)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub problems: Vec<ProblemOutcome>,
    pub validation: Option<ValidationReport>,
}

struct Setup<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a LinearModel,
    reg: &'a Regularizer,
    ens0: &'a Ensemble,
    reference: Reference,
    h0: f64,
    p: f64,
    iterations: usize,
    burn_ins: &'a [usize],
    match_budget: bool,
}

enum Job {
    SekiF,
    SubGd,
    Ista,
}

fn solver_config(setup: &Setup<'_>, mode: SolverMode, schedule: StepSchedule, iterations: usize) -> SolverConfig {
    let mut c = SolverConfig::new(mode, schedule, iterations);
    c.seed = setup.cfg.seed;
    c.trace_stride = setup.cfg.trace_stride;
    c.wall_clock = setup.cfg.wall_clock;
    c
}

fn run_job(setup: &Setup<'_>, job: &Job) -> Result<Vec<SolverRun>> {
    let s = setup;
    let reference = Some(&s.reference);
    match job {
        Job::SekiF => {
            let kb_max = s.burn_ins.iter().copied().max().unwrap_or(0);
            let mut c = solver_config(
                s,
                SolverMode::SekiMeanSubgradient,
                StepSchedule::Hybrid {
                    h0: s.h0,
                    p: s.p,
                    burn_in: kb_max,
                    scale_rule: s.cfg.phase_two_scale,
                },
                s.iterations,
            );
            c.freeze = true;
            let traces = run_hybrid_multi(&c, s.ens0, s.model, s.reg, reference, s.burn_ins)?;
            Ok(s.burn_ins
                .iter()
                .zip(traces)
                .map(|(&kb, trace)| SolverRun {
                    solver: SolverName::SekiF,
                    burn_in: Some(kb),
                    trace,
                })
                .collect())
        }
        Job::SubGd => {
            let iterations = if s.match_budget && s.cfg.solvers.contains(&SolverName::SekiF) {
                let kb = s.burn_ins.iter().copied().max().unwrap_or(0);
                kb * s.ens0.size() + (s.iterations - kb)
            } else {
                s.iterations
            };
            let c = solver_config(s, SolverMode::SubGd, StepSchedule::Polynomial { h0: s.h0, p: s.p }, iterations);
            let trace = run_subgd(&c, &s.ens0.mean(), s.model, s.reg, reference)?;
            Ok(vec![SolverRun {
                solver: SolverName::SubGd,
                burn_in: None,
                trace,
            }])
        }
        Job::Ista => {
            let h = 0.99 / s.model.spectral_bounds().l;
            let c = solver_config(s, SolverMode::Ista, StepSchedule::Constant { h0: h }, s.iterations);
            let trace = run_ista(&c, &s.ens0.mean(), s.model, s.reg, reference)?;
            Ok(vec![SolverRun {
                solver: SolverName::Ista,
                burn_in: None,
                trace,
            }])
        }
    }
}

fn run_solvers(setup: &Setup<'_>) -> Result<Vec<SolverRun>> {
    let jobs: Vec<Job> = setup
        .cfg
        .solvers
        .iter()
        .map(|s| match s {
            SolverName::SekiF => Job::SekiF,
            SolverName::SubGd => Job::SubGd,
            SolverName::Ista => Job::Ista,
        })
        .collect();
    let results: Vec<Result<Vec<SolverRun>>> = jobs.par_iter().map(|j| run_job(setup, j)).collect();
    let mut runs = Vec::new();
    for r in results {
        runs.extend(r?);
    }
    for r in &runs {
        if r.trace.has_non_finite() {
            return Err(SekiError::Numerical(format!("{} produced non-finite values", r.file_name())));
        }
    }
    Ok(runs)
}

fn run_ct(cfg: &ExperimentConfig, ct: &CtConfig, seeds: &SeedStream) -> Result<ProblemOutcome> {
    let problem = build_ct_problem(ct, seeds)?;
    let model: &LinearModel = &problem.model;
    let d = model.dim();
    let ens0 = initial_ensemble(cfg, d, ct.ensemble_size, seeds, "ct")?;
    let h0 = initial_step(cfg, model);
    let method = ReferenceMethod::SubGd {
        h0,
        p: ct.p,
        iterations: cfg.reference_factor * ct.iterations,
        x0: ens0.mean(),
    };
    let reference = compute_reference(&method, model, &problem.reg, Some(&cfg.out_dir))?;
    let setup = Setup {
        cfg,
        model,
        reg: &problem.reg,
        ens0: &ens0,
        reference: reference.as_reference(),
        h0,
        p: ct.p,
        iterations: ct.iterations,
        burn_ins: &ct.burn_ins,
        match_budget: ct.match_budget,
    };
    let mut runs = run_solvers(&setup)?;
    for r in &mut runs {
        r.trace.meta("experiment", "ct");
        r.trace.meta("reference", &reference.method);
    }
    Ok(ProblemOutcome {
        experiment: ExperimentKind::Ct,
        rho: None,
        reference,
        runs,
    })
}

fn run_cs(cfg: &ExperimentConfig, cs: &CsConfig, rho: f64, seeds: &SeedStream) -> Result<ProblemOutcome> {
    let problem = build_cs_problem(cs, rho, seeds)?;
    let ens0 = initial_ensemble(cfg, cs.d, cs.ensemble_size, seeds, "cs")?;
    let h0 = initial_step(cfg, &problem.model);
    let method = ReferenceMethod::Ista {
        h_factor: 0.99,
        tol: cfg.ista_tol,
        max_iter: cfg.ista_max_iter,
    };
    let reference = compute_reference(&method, &problem.model, &problem.reg, Some(&cfg.out_dir))?;
    let setup = Setup {
        cfg,
        model: &problem.model,
        reg: &problem.reg,
        ens0: &ens0,
        reference: reference.as_reference(),
        h0,
        p: cs.p,
        iterations: cs.iterations,
        burn_ins: &cs.burn_ins,
        match_budget: cs.match_budget,
    };
    let mut runs = run_solvers(&setup)?;
    for r in &mut runs {
        r.trace.meta("experiment", "cs");
        r.trace.meta("rho", rho);
        r.trace.meta("reference", &reference.method);
    }
    Ok(ProblemOutcome {
        experiment: ExperimentKind::Cs,
        rho: Some(rho),
        reference,
        runs,
    })
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SekiError::invalid("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the configured experiment without writing traces (the reference cache in
/// `out_dir` is still used).
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let resolved = cfg.resolve();
    let seeds = SeedStream::new(cfg.seed);
    with_pool(cfg.workers, || -> Result<Outcome> {
        Ok(match cfg.experiment {
            ExperimentKind::Ct => Outcome {
                problems: vec![run_ct(cfg, &resolved.ct, &seeds)?],
                validation: None,
            },
            ExperimentKind::Cs => {
                let problems = resolved
                    .cs
                    .rho
                    .iter()
                    .map(|&rho| run_cs(cfg, &resolved.cs, rho, &seeds))
                    .collect::<Result<Vec<_>>>()?;
                Outcome {
                    problems,
                    validation: None,
                }
            }
            ExperimentKind::Validate => Outcome {
                problems: Vec::new(),
                validation: Some(run_validation(cfg.seed)?),
            },
        })
    })?
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn summary_csv(outcome: &Outcome) -> String {
    let mut s = String::from(SUMMARY_COLUMNS);
    s.push('\n');
    for p in &outcome.problems {
        let exp = match p.experiment {
            ExperimentKind::Ct => "ct",
            ExperimentKind::Cs => "cs",
            ExperimentKind::Validate => "validate",
        };
        for r in &p.runs {
            let last = r.trace.last();
            let _ = writeln!(
                s,
                "{exp},{},{},{},{},{},{},{},{},{}",
                p.rho.map(|v| v.to_string()).unwrap_or_default(),
                r.solver.as_str(),
                r.burn_in.map(|v| v.to_string()).unwrap_or_default(),
                r.trace.len(),
                cell(last.map(|l| l.objective)),
                cell(last.and_then(|l| l.objective_gap)),
                cell(last.and_then(|l| l.rel_error)),
                r.trace.total_forward_evals(),
                fmt_f64(last.map_or(0.0, |l| l.wall_time)),
            );
        }
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(path.to_path_buf())
}

/// Writes traces, `summary.csv`, and `validation_report.csv` where applicable.
pub fn write_outputs(out_dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for p in &outcome.problems {
        let dir = out_dir.join(p.subdir());
        for r in &p.runs {
            written.push(write_file(&dir.join(r.file_name()), &r.trace.to_csv())?);
        }
    }
    if !outcome.problems.is_empty() {
        written.push(write_file(&out_dir.join("summary.csv"), &summary_csv(outcome))?);
    }
    if let Some(v) = &outcome.validation {
        written.push(write_file(&out_dir.join("validation_report.csv"), &v.to_csv())?);
    }
    Ok(written)
}

/// Validates, runs and writes outputs to `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let outcome = execute(cfg)?;
    write_outputs(&cfg.out_dir, &outcome)?;
    Ok(outcome)
}
