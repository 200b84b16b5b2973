//! Continuous-time checks: the Yosida-regularized ensemble flow, its covariance
//! law, Cauchy behaviour in `τ`, mean contraction, and collapse rates.

mod report;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use report::{ValidationReport, ValidationRow, REPORT_COLUMNS};

use crate::ensemble::Ensemble;
use crate::error::{Result, SekiError};
use crate::forward::LinearModel;
use crate::linalg::{eigen_extremes, frobenius, ls_slope, spd_inverse, symmetrize};
use crate::regularizer::Regularizer;
use crate::solver::RunTrace;

/// Number of uniformly spaced samples returned by the integrator.
pub const SAMPLES: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub ensemble: Ensemble,
    pub t: f64,
    /// Integrator step actually used.
    pub dt: f64,
}

impl FlowState {
    pub fn covariance(&self) -> DMatrix<f64> {
        self.ensemble.stats().covariance
    }
}

/// `C(t) = (C(0)⁻¹ + 2t S̃)⁻¹` with `S̃` the Hessian of the (augmented) misfit.
#[derive(Clone, Debug)]
pub struct CovarianceLaw {
    /// Inverse of the initial ensemble covariance.
    pub c0_inv: DMatrix<f64>,
    pub s_tilde: DMatrix<f64>,
}

impl CovarianceLaw {
    pub fn new(c_init: &DMatrix<f64>, model: &LinearModel) -> Result<Self> {
        if c_init.nrows() != model.dim() {
            return Err(SekiError::dim("initial covariance does not match the model"));
        }
        Ok(CovarianceLaw {
            c0_inv: spd_inverse(c_init, "initial ensemble covariance")?,
            s_tilde: model.hessian(),
        })
    }

    pub fn from_ensemble(ens: &Ensemble, model: &LinearModel) -> Result<Self> {
        Self::new(&ens.stats().covariance, model)
    }

    pub fn closed_form(&self, t: f64) -> Result<DMatrix<f64>> {
        spd_inverse(&(&self.c0_inv + &self.s_tilde * (2.0 * t)), "closed-form covariance")
    }

    pub fn closed_form_inverse(&self, t: f64) -> DMatrix<f64> {
        &self.c0_inv + &self.s_tilde * (2.0 * t)
    }
}

/// Right-hand side of the particle system `ẋ_j = −C(X)(∇Φ(x_j) + A_τ(x̄))`.
struct Flow<'a> {
    s: DMatrix<f64>,
    b: DVector<f64>,
    reg: &'a Regularizer,
    tau: f64,
}

impl<'a> Flow<'a> {
    fn new(model: &LinearModel, reg: &'a Regularizer, tau: f64) -> Self {
        let b = model.a().tr_mul(&model.gamma().solve(model.y()));
        Flow {
            s: model.hessian(),
            b,
            reg,
            tau,
        }
    }

    fn mean_drift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = &self.s * x - &self.b;
        if self.tau > 0.0 {
            g += self.reg.yosida(x, self.tau)?;
        }
        Ok(g)
    }

    fn rhs(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let j = x.ncols();
        let mean = x.column_mean();
        let mut e = x.clone();
        for mut c in e.column_iter_mut() {
            c -= &mean;
        }
        let a_tau = self.reg.yosida(&mean, self.tau)?;
        let mut g = &self.s * x;
        for mut c in g.column_iter_mut() {
            c -= &self.b;
            c += &a_tau;
        }
        Ok(-(&e * (e.tr_mul(&g) / j as f64)))
    }

    fn rk4(&self, x: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
        let k1 = self.rhs(x)?;
        let k2 = self.rhs(&(x + &k1 * (dt / 2.0)))?;
        let k3 = self.rhs(&(x + &k2 * (dt / 2.0)))?;
        let k4 = self.rhs(&(x + &k3 * dt))?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }
}

/// Largest step allowed by `dt · λ_max(C(0)) / τ ≤ 0.1`.
pub fn max_stable_dt(ens0: &Ensemble, tau: f64) -> f64 {
    let (_, lmax) = eigen_extremes(&ens0.stats().covariance);
    0.1 * tau / lmax
}

/// Integrates the Yosida-regularized flow with classical RK4 and returns the state at
/// `SAMPLES` uniform times on `[0, T]`. `dt` is shrunk so that samples fall on steps.
pub fn integrate_yosida_flow(
    ens0: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    tau: f64,
    t_end: f64,
    dt: f64,
) -> Result<Vec<FlowState>> {
    if ens0.dim() != model.dim() {
        return Err(SekiError::dim("ensemble and model dimensions differ"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(SekiError::invalid("tau", format!("must be positive, got {tau}")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(SekiError::invalid("T", format!("must be positive, got {t_end}")));
    }
    if !(dt > 0.0) {
        return Err(SekiError::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !reg.has_prox() {
        return Err(SekiError::Unsupported(format!("no proximal map for {}", reg.describe())));
    }
    let limit = max_stable_dt(ens0, tau);
    if dt > limit {
        return Err(SekiError::invalid(
            "dt",
            format!("explicit integration needs dt ≤ {limit:e} (0.1 τ / λ_max(C(0))), got {dt:e}"),
        ));
    }
    let gap = t_end / (SAMPLES - 1) as f64;
    let per_gap = (gap / dt).ceil().max(1.0) as usize;
    let h = gap / per_gap as f64;
    let flow = Flow::new(model, reg, tau);
    let mut x = ens0.particles().clone();
    let mut out = Vec::with_capacity(SAMPLES);
    out.push(FlowState {
        ensemble: ens0.clone(),
        t: 0.0,
        dt: h,
    });
    for i in 1..SAMPLES {
        for _ in 0..per_gap {
            x = flow.rk4(&x, h)?;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SekiError::Numerical(format!("flow diverged before t = {:e}", i as f64 * gap)));
        }
        out.push(FlowState {
            ensemble: Ensemble::from_matrix(x.clone())?,
            t: i as f64 * gap,
            dt: h,
        });
    }
    Ok(out)
}

/// Mean drift `−C (∇Φ(x̄) + A_τ(x̄))` of the flow at the given ensemble.
pub fn mean_velocity(ens: &Ensemble, model: &LinearModel, reg: &Regularizer, tau: f64) -> Result<DVector<f64>> {
    let flow = Flow::new(model, reg, tau);
    let stats = ens.stats();
    Ok(-stats.apply_covariance(&flow.mean_drift(&stats.mean)?))
}

/// Sup over samples of the mean difference between integrations at `dt` and `dt/2`.
pub fn richardson_error(
    ens0: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    tau: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let coarse = integrate_yosida_flow(ens0, model, reg, tau, t_end, dt)?;
    let fine = integrate_yosida_flow(ens0, model, reg, tau, t_end, coarse[0].dt / 2.0)?;
    Ok(sup_mean_distance(&coarse, &fine))
}

fn sup_mean_distance(a: &[FlowState], b: &[FlowState]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p.ensemble.mean() - q.ensemble.mean()).norm())
        .fold(0.0, f64::max)
}

/// Max over samples of `‖C(t) − closed_form(t)‖_F / ‖closed_form(t)‖_F`.
pub fn covariance_closed_form_check(trajectory: &[FlowState], law: &CovarianceLaw) -> Result<f64> {
    let mut worst = 0.0f64;
    for s in trajectory {
        let exact = law.closed_form(s.t)?;
        let err = frobenius(&(s.covariance() - &exact)) / frobenius(&exact);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CauchyScaling {
    pub taus: Vec<f64>,
    /// `sup_t ‖x̄_τ(t) − x̄_ref(t)‖` per `τ`.
    pub discrepancies: Vec<f64>,
    pub reference_tau: f64,
    /// Least-squares slope of `log D` against `log τ`; `+∞` when every `D` vanishes.
    pub exponent: f64,
}

/// Compares mean trajectories for each `τ` against a reference at `τ_min / 10`. All
/// runs share one step, the largest allowed for the reference `τ` (capped by `dt`).
pub fn cauchy_scaling_check(
    ens0: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    taus: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<CauchyScaling> {
    if taus.len() < 3 {
        return Err(SekiError::invalid("tau_list", format!("need at least 3 values, got {}", taus.len())));
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(SekiError::invalid("tau_list", "must be positive and strictly decreasing"));
    }
    let reference_tau = taus[taus.len() - 1] / 10.0;
    let step = dt.min(max_stable_dt(ens0, reference_tau));
    let mut all: Vec<f64> = taus.to_vec();
    all.push(reference_tau);
    let trajectories = all
        .par_iter()
        .map(|&tau| integrate_yosida_flow(ens0, model, reg, tau, t_end, step))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (reference, runs) = trajectories.split_last().expect("nonempty");
    let discrepancies: Vec<f64> = runs.iter().map(|r| sup_mean_distance(r, reference)).collect();
    let exponent = if discrepancies.iter().all(|d| *d == 0.0) {
        f64::INFINITY
    } else {
        let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
        let ys: Vec<f64> = discrepancies.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
        ls_slope(&xs, &ys)
    };
    Ok(CauchyScaling {
        taus: taus.to_vec(),
        discrepancies,
        reference_tau,
        exponent,
    })
}

fn c_norm(v: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let inv = spd_inverse(c, "ensemble covariance")?;
    Ok(v.dot(&(inv * v)).max(0.0).sqrt())
}

/// Max over samples of `‖x̄(t) − z̄(t)‖_{C(t)} − ‖x̄₀ − z̄₀‖_{C(0)}` for two ensembles with
/// identical deviations.
pub fn mean_contraction_check_pair(
    ens_x: &Ensemble,
    ens_z: &Ensemble,
    model: &LinearModel,
    reg: &Regularizer,
    tau: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    if ens_x.dim() != ens_z.dim() || ens_x.size() != ens_z.size() {
        return Err(SekiError::dim("ensembles differ in shape"));
    }
    let diff = (ens_x.deviations() - ens_z.deviations()).amax();
    if diff > 1e-12 * (1.0 + ens_x.deviations().amax()) {
        return Err(SekiError::invalid("ensembles", format!("deviations differ by {diff:e}")));
    }
    let tx = integrate_yosida_flow(ens_x, model, reg, tau, t_end, dt)?;
    let tz = integrate_yosida_flow(ens_z, model, reg, tau, t_end, dt)?;
    let d0 = c_norm(&(ens_x.mean() - ens_z.mean()), &tx[0].covariance())?;
    let mut worst = f64::NEG_INFINITY;
    for (a, b) in tx.iter().zip(&tz) {
        let d = c_norm(&(a.ensemble.mean() - b.ensemble.mean()), &a.covariance())?;
        worst = worst.max(d - d0);
    }
    Ok(worst)
}

/// As [`mean_contraction_check_pair`] with the second ensemble shifted by `mean_shift`.
pub fn mean_contraction_check(
    ens0: &Ensemble,
    mean_shift: &DVector<f64>,
    model: &LinearModel,
    reg: &Regularizer,
    tau: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    if mean_shift.len() != ens0.dim() {
        return Err(SekiError::dim("mean shift has the wrong length"));
    }
    let mut z = ens0.particles().clone();
    for mut c in z.column_iter_mut() {
        c += mean_shift;
    }
    mean_contraction_check_pair(ens0, &Ensemble::from_matrix(z)?, model, reg, tau, t_end, dt)
}

/// Least-squares slope of `log λ` against `log(k+1)` over the tail half of the samples.
pub fn collapse_rate_fit(ks: &[f64], lambdas: &[f64]) -> Result<f64> {
    if ks.len() != lambdas.len() {
        return Err(SekiError::dim("sample and eigenvalue counts differ"));
    }
    if ks.len() < 100 {
        return Err(SekiError::invalid("samples", format!("need at least 100, got {}", ks.len())));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(SekiError::Numerical("nonpositive eigenvalue in collapse fit".into()));
    }
    let tail = ks.len() / 2;
    let xs: Vec<f64> = ks[tail..].iter().map(|k| (k + 1.0).ln()).collect();
    let ys: Vec<f64> = lambdas[tail..].iter().map(|l| l.ln()).collect();
    Ok(ls_slope(&xs, &ys))
}

/// Collapse rate from the traced `λ_max` rows of a run.
pub fn collapse_rate_from_trace(trace: &RunTrace) -> Result<f64> {
    let (ks, ls): (Vec<f64>, Vec<f64>) = trace
        .records
        .iter()
        .filter_map(|r| r.lambda_max.map(|l| (r.k as f64, l)))
        .unzip();
    collapse_rate_fit(&ks, &ls)
}

/// Collapse rate of `λ_max(C(t))` against `t + 1` along an integrated flow.
pub fn collapse_rate_from_flow(trajectory: &[FlowState]) -> Result<f64> {
    let mut ks = Vec::with_capacity(trajectory.len());
    let mut ls = Vec::with_capacity(trajectory.len());
    for s in trajectory {
        let mut c = s.covariance();
        symmetrize(&mut c);
        ks.push(s.t);
        ls.push(eigen_extremes(&c).1);
    }
    collapse_rate_fit(&ks, &ls)
}

/// Largest increase of `Φ(x̄) + R_τ(x̄)` between consecutive samples, relative to the
/// slack scale `1 + |E(0)|`.
pub fn energy_increase(trajectory: &[FlowState], model: &LinearModel, reg: &Regularizer, tau: f64) -> Result<f64> {
    let mut energies = Vec::with_capacity(trajectory.len());
    for s in trajectory {
        let m = s.ensemble.mean();
        energies.push(model.misfit_value(&m)? + reg.moreau_envelope(&m, tau)?);
    }
    let scale = 1.0 + energies.first().map_or(0.0, |e| e.abs());
    Ok(energies.windows(2).map(|w| (w[1] - w[0]) / scale).fold(f64::NEG_INFINITY, f64::max))
}

/// Largest `R_τ(x̄) − R(x̄)` over samples; nonpositive when the envelope stays below `R`.
pub fn moreau_excess(trajectory: &[FlowState], reg: &Regularizer, tau: f64) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for s in trajectory {
        let m = s.ensemble.mean();
        worst = worst.max(reg.moreau_envelope(&m, tau)? - reg.value(&m)?);
    }
    Ok(worst)
}

/// `max_t (t+1) λ_max(C(t))` and `min_t (t+1) λ_min(C(t))` of the closed form on a
/// uniform grid of `[0, T]`.
pub fn closed_form_envelope(law: &CovarianceLaw, t_end: f64) -> Result<(f64, f64)> {
    let mut upper = 0.0f64;
    let mut lower = f64::INFINITY;
    for i in 0..SAMPLES {
        let t = t_end * i as f64 / (SAMPLES - 1) as f64;
        let (lo, hi) = eigen_extremes(&law.closed_form(t)?);
        upper = upper.max((t + 1.0) * hi);
        lower = lower.min((t + 1.0) * lo);
    }
    Ok((upper, lower))
}
