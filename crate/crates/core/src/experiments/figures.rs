//! Plot-ready series for the convergence figures.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{execute, write_outputs, ExperimentConfig, ExperimentKind, Outcome, ProblemOutcome};
use crate::error::{Result, SekiError};
use crate::solver::{fmt_f64, TraceRecord};

/// Points kept per series; longer traces are thinned on a logarithmic index grid.
const MAX_POINTS: usize = 2000;

fn thinned(n: usize) -> Vec<usize> {
    if n <= MAX_POINTS {
        return (0..n).collect();
    }
    let top = (n as f64).ln();
    let mut idx: BTreeSet<usize> = (0..MAX_POINTS)
        .map(|i| ((top * i as f64 / (MAX_POINTS - 1) as f64).exp() - 1.0).round() as usize)
        .map(|i| i.min(n - 1))
        .collect();
    idx.insert(n - 1);
    idx.into_iter().collect()
}

type Metric = fn(&TraceRecord) -> Option<f64>;
type Axis = fn(&TraceRecord) -> f64;

fn label(p: &ProblemOutcome) -> String {
    match (p.experiment, p.rho) {
        (ExperimentKind::Cs, Some(r)) => format!("cs_rho{r}"),
        _ => "ct".into(),
    }
}

/// One CSV per (problem, metric, axis) with columns `solver,burn_in,x,value`.
pub fn write_figures(out_dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    let metrics: [(&str, Metric); 2] = [("gap", |r| r.objective_gap), ("rel_error", |r| r.rel_error)];
    let axes: [(&str, Axis); 3] = [
        ("iteration", |r| r.k as f64),
        ("forward_evals", |r| r.forward_evals as f64),
        ("wall_time", |r| r.wall_time),
    ];
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for p in &outcome.problems {
        for (mname, metric) in &metrics {
            for (aname, axis) in &axes {
                let mut s = String::from("solver,burn_in,x,value\n");
                for run in &p.runs {
                    let kb = run.burn_in.map(|v| v.to_string()).unwrap_or_default();
                    for i in thinned(run.trace.len()) {
                        let r = &run.trace.records[i];
                        if let Some(v) = metric(r) {
                            let _ = writeln!(s, "{},{kb},{},{}", run.solver.as_str(), fmt_f64(axis(r)), fmt_f64(v));
                        }
                    }
                }
                let path = out_dir.join(format!("figure_{}_{mname}_{aname}.csv", label(p)));
                fs::write(&path, s)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Runs the CT and CS experiments at `scale` and writes traces, summaries and figure
/// series under `base.out_dir/{ct,cs}`.
pub fn reproduce_figures(base: &ExperimentConfig, scale: f64) -> Result<Vec<PathBuf>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(SekiError::invalid("scale", format!("must lie in (0, 1], got {scale}")));
    }
    let mut out = Vec::new();
    for (kind, sub) in [(ExperimentKind::Ct, "ct"), (ExperimentKind::Cs, "cs")] {
        let cfg = ExperimentConfig {
            experiment: kind,
            scale,
            out_dir: base.out_dir.join(sub),
            ..base.clone()
        };
        let outcome = execute(&cfg)?;
        out.extend(write_outputs(&cfg.out_dir, &outcome)?);
        out.extend(write_figures(&cfg.out_dir, &outcome)?);
    }
    Ok(out)
}
