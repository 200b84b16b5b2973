//! Experiment configuration: full-size defaults, JSON files with dotted overrides,
//! and the size rules applied by `scale`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SekiError};
use crate::solver::PhaseTwoScale;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Ct,
    Cs,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    /// Hybrid SEKI with covariance freezing, one run per burn-in length.
    SekiF,
    #[serde(rename = "subgd", alias = "sub_gd")]
    SubGd,
    Ista,
}

impl SolverName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverName::SekiF => "seki_f",
            SolverName::SubGd => "subgd",
            SolverName::Ista => "ista",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "seki_f" | "seki-f" | "sekif" => Ok(SolverName::SekiF),
            "subgd" | "sub_gd" | "sub-gd" => Ok(SolverName::SubGd),
            "ista" => Ok(SolverName::Ista),
            other => Err(SekiError::invalid("solvers", format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtConfig {
    pub n: usize,
    pub angles: usize,
    pub bins: usize,
    pub sigma: f64,
    pub alpha_tikhonov: f64,
    pub alpha_tv: f64,
    pub ensemble_size: usize,
    pub burn_ins: Vec<usize>,
    pub iterations: usize,
    pub p: f64,
    pub phantom_jitter: f64,
    /// Weight the data misfit by `1/σ²`; `false` uses `½‖Ax − y‖²`.
    pub weighted_misfit: bool,
    /// Run Sub-GD for the largest SEKI-f forward-evaluation budget instead of `iterations`.
    pub match_budget: bool,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            n: 32,
            angles: 50,
            bins: 32,
            sigma: 0.01,
            alpha_tikhonov: 0.01,
            alpha_tv: 0.1,
            ensemble_size: 1200,
            burn_ins: vec![50, 1000, 2000, 5000],
            iterations: 500_000,
            p: 1.0,
            phantom_jitter: 0.0,
            weighted_misfit: true,
            match_budget: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsConfig {
    pub d: usize,
    /// Number of measurements `K`.
    #[serde(rename = "K")]
    pub measurements: usize,
    #[serde(rename = "s")]
    pub sparsity: usize,
    pub rho: Vec<f64>,
    pub sigma: f64,
    pub alpha: f64,
    pub ensemble_size: usize,
    pub burn_ins: Vec<usize>,
    pub iterations: usize,
    pub p: f64,
    pub match_budget: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            d: 512,
            measurements: 160,
            sparsity: 20,
            rho: vec![0.0, 0.95, 0.98],
            sigma: 0.02,
            alpha: 0.05,
            ensemble_size: 1500,
            burn_ins: vec![500, 1000, 4000],
            iterations: 100_000,
            p: 0.6,
            match_budget: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Size factor in `(0, 1]`; see [`ExperimentConfig::resolve`].
    pub scale: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub solvers: Vec<SolverName>,
    pub ct: CtConfig,
    pub cs: CsConfig,
    /// Standard deviation of the initial ensemble around zero.
    pub init_std: f64,
    /// Initial step; `None` uses `h0_factor / λ_max(S)`.
    pub h0: Option<f64>,
    pub h0_factor: f64,
    pub phase_two_scale: PhaseTwoScale,
    pub trace_stride: usize,
    pub wall_clock: bool,
    /// Worker threads for independent runs; `None` uses every core.
    pub workers: Option<usize>,
    /// Reference Sub-GD runs this many times the iteration budget.
    pub reference_factor: usize,
    pub ista_tol: f64,
    pub ista_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Ct,
            scale: 1.0,
            seed: 0,
            out_dir: PathBuf::from("out"),
            solvers: vec![SolverName::SekiF, SolverName::SubGd],
            ct: CtConfig::default(),
            cs: CsConfig::default(),
            init_std: 0.1,
            h0: None,
            h0_factor: 0.9,
            phase_two_scale: PhaseTwoScale::BurnIn,
            trace_stride: 10,
            wall_clock: false,
            workers: None,
            reference_factor: 10,
            ista_tol: 1e-10,
            ista_max_iter: 200_000,
        }
    }
}

fn scaled(v: usize, f: f64, min: usize) -> usize {
    ((v as f64 * f).round() as usize).max(min)
}

/// Sizes after scaling, used by the runners.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub ct: CtConfig,
    pub cs: CsConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| SekiError::invalid("config", e.to_string()))?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| SekiError::invalid("config", e.to_string()))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `key=value` overrides with dotted keys (`cs.rho=[0,0.9]`). Values are
    /// parsed as JSON, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = self.to_value();
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| SekiError::invalid("override", format!("expected key=value, got `{o}`")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut root, key, value)?;
        }
        Self::from_value(root)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(SekiError::invalid("scale", format!("must lie in (0, 1], got {}", self.scale)));
        }
        if self.solvers.is_empty() {
            return Err(SekiError::invalid("solvers", "at least one solver is required"));
        }
        if !(self.init_std > 0.0) {
            return Err(SekiError::invalid("init_std", "must be positive"));
        }
        if let Some(h) = self.h0 {
            if !(h > 0.0) || !h.is_finite() {
                return Err(SekiError::invalid("h0", format!("must be positive, got {h}")));
            }
        }
        if !(self.h0_factor > 0.0) {
            return Err(SekiError::invalid("h0_factor", "must be positive"));
        }
        if self.trace_stride == 0 {
            return Err(SekiError::invalid("trace_stride", "must be positive"));
        }
        if self.workers == Some(0) {
            return Err(SekiError::invalid("workers", "must be positive"));
        }
        if self.reference_factor == 0 {
            return Err(SekiError::invalid("reference_factor", "must be positive"));
        }
        let r = self.resolve();
        match self.experiment {
            ExperimentKind::Ct => check_ct(&r.ct)?,
            ExperimentKind::Cs => check_cs(&r.cs)?,
            ExperimentKind::Validate => {}
        }
        Ok(())
    }

    /// Sizes at `scale = s`: unknowns, data, sparsity, ensemble and burn-in counts are
    /// multiplied by `s` (CT image side, angles and bins by `√s`); iteration budgets by
    /// `s²` for CT and `s` for CS.
    pub fn resolve(&self) -> Resolved {
        let s = self.scale;
        let r = s.sqrt();
        let mut ct = self.ct.clone();
        ct.n = scaled(ct.n, r, 2);
        ct.angles = scaled(ct.angles, r, 1);
        ct.bins = scaled(ct.bins, r, 1);
        ct.ensemble_size = scaled(ct.ensemble_size, s, 2);
        ct.burn_ins = ct.burn_ins.iter().map(|&k| scaled(k, s, 1)).collect();
        ct.iterations = scaled(ct.iterations, s * s, 1);
        let mut cs = self.cs.clone();
        cs.d = scaled(cs.d, s, 1);
        cs.measurements = scaled(cs.measurements, s, 1);
        cs.sparsity = scaled(cs.sparsity, s, 1);
        cs.ensemble_size = scaled(cs.ensemble_size, s, 2);
        cs.burn_ins = cs.burn_ins.iter().map(|&k| scaled(k, s, 1)).collect();
        cs.iterations = scaled(cs.iterations, s, 1);
        Resolved { ct, cs }
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| SekiError::invalid("override", format!("`{key}` does not name a config field")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(SekiError::invalid("override", format!("unknown config field `{key}`")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| SekiError::invalid("override", format!("unknown config field `{key}`")))?;
    }
    Ok(())
}

fn check_burn_ins(burn_ins: &[usize], iterations: usize, prefix: &'static str) -> Result<()> {
    if burn_ins.is_empty() {
        return Err(SekiError::invalid(prefix, "burn_ins must not be empty"));
    }
    if let Some(&kb) = burn_ins.iter().find(|&&kb| kb > iterations) {
        return Err(SekiError::invalid(prefix, format!("burn-in {kb} exceeds iterations {iterations}")));
    }
    Ok(())
}

fn check_ct(c: &CtConfig) -> Result<()> {
    if !(c.sigma > 0.0) {
        return Err(SekiError::invalid("ct.sigma", "must be positive"));
    }
    if !(c.alpha_tikhonov > 0.0) {
        return Err(SekiError::invalid("ct.alpha_tikhonov", "must be positive"));
    }
    if !(c.alpha_tv >= 0.0) {
        return Err(SekiError::invalid("ct.alpha_tv", "must be nonnegative"));
    }
    if !(c.p >= 0.0) {
        return Err(SekiError::invalid("ct.p", "must be nonnegative"));
    }
    check_burn_ins(&c.burn_ins, c.iterations, "ct.burn_ins")
}

fn check_cs(c: &CsConfig) -> Result<()> {
    if c.sparsity > c.d {
        return Err(SekiError::invalid("cs.s", format!("sparsity {} exceeds d = {}", c.sparsity, c.d)));
    }
    if c.rho.is_empty() || c.rho.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(SekiError::invalid("cs.rho", "needs values in [0, 1)"));
    }
    if !(c.sigma >= 0.0) {
        return Err(SekiError::invalid("cs.sigma", "must be nonnegative"));
    }
    if !(c.alpha >= 0.0) {
        return Err(SekiError::invalid("cs.alpha", "must be nonnegative"));
    }
    if !(c.p >= 0.0) {
        return Err(SekiError::invalid("cs.p", "must be nonnegative"));
    }
    check_burn_ins(&c.burn_ins, c.iterations, "cs.burn_ins")
}
