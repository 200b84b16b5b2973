//! C ABI over the `seki` library.
//!
//! Every object crosses the boundary as an opaque pointer created by a `seki_*_new`-style
//! constructor and released by the matching `seki_*_free`. Fallible calls return a
//! [`SekiStatus`]; the message of the most recent failure on the calling thread is
//! available from [`seki_last_error`]. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use seki::ensemble::Ensemble;
use seki::error::SekiError;
use seki::forward::{build_augmented, LinearModel, NoiseCovariance};
use seki::regularizer::Regularizer;
use seki::rng::SeedStream;
use seki::solver::{self, PhaseTwoScale, RunTrace, SolverConfig, SolverMode, StepSchedule};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SekiStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Invalid = 3,
    Unsupported = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Rule fixing the phase-two step scale when the covariance is frozen.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SekiScaleRule {
    Covariance = 0,
    BurnIn = 1,
}

/// One trace row. Quantities that were not recorded are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SekiRecord {
    pub k: u64,
    pub objective: f64,
    pub objective_gap: f64,
    pub rel_error: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub spread: f64,
    pub forward_evals: u64,
    pub wall_time_s: f64,
}

pub struct SekiModel(LinearModel);
pub struct SekiRegularizer(Regularizer);
pub struct SekiEnsemble(Ensemble);
pub struct SekiTrace(RunTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Lib(SekiError),
}

impl From<SekiError> for Failure {
    fn from(e: SekiError) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = std::result::Result<(), Failure>;

fn guard<F: FnOnce() -> FfiResult>(f: F) -> SekiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SekiStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SekiStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            let status = match &e {
                SekiError::Dimension(_) => SekiStatus::Dimension,
                SekiError::Invalid { .. } => SekiStatus::Invalid,
                SekiError::Unsupported(_) => SekiStatus::Unsupported,
                SekiError::Numerical(_) => SekiStatus::Numerical,
                SekiError::Io(_) => SekiStatus::Io,
            };
            set_error(e.to_string());
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SekiStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| Failure::Lib(SekiError::Dimension(format!("{rows}x{cols} overflows"))))
}

fn copy_out(dst: &mut [f64], src: &[f64]) -> FfiResult {
    if dst.len() != src.len() {
        return Err(Failure::Lib(SekiError::Dimension(format!(
            "output buffer has length {}, expected {}",
            dst.len(),
            src.len()
        ))));
    }
    dst.copy_from_slice(src);
    Ok(())
}

unsafe fn free_box<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn seki_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn seki_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Linear model `y = A x + η` with `η ~ N(0, σ² I)`. `a` is `rows × cols`, `y` has `rows` entries.
///
/// # Safety
/// `a` and `y` must point to buffers of the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_model_new(
    a: *const f64,
    rows: usize,
    cols: usize,
    y: *const f64,
    sigma: f64,
    out: *mut *mut SekiModel,
) -> SekiStatus {
    guard(|| {
        let a = slice(a, checked_len(rows, cols)?, "a")?;
        let y = slice(y, rows, "y")?;
        let gamma = NoiseCovariance::isotropic(rows, sigma * sigma)?;
        let model = LinearModel::new(
            DMatrix::from_row_slice(rows, cols, a),
            gamma,
            DVector::from_column_slice(y),
        )?;
        put(out, SekiModel(model))
    })
}

/// Stack the prior `x ~ N(0, C₀)` under `base`; `c0` is `d × d` with `d` the state dimension.
///
/// # Safety
/// `base` must be a live model handle and `c0` must hold `d²` values.
#[no_mangle]
pub unsafe extern "C" fn seki_model_augment(
    base: *const SekiModel,
    c0: *const f64,
    out: *mut *mut SekiModel,
) -> SekiStatus {
    guard(|| {
        let base = &href(base, "base")?.0;
        let d = base.dim();
        let c0 = slice(c0, checked_len(d, d)?, "c0")?;
        let aug = build_augmented(base.clone(), DMatrix::from_row_slice(d, d, c0))?;
        put(out, SekiModel(aug.combined().clone()))
    })
}

/// # Safety
/// `model` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn seki_model_dim(model: *const SekiModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `model` must be a live model handle and `x` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn seki_model_misfit(
    model: *const SekiModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SekiStatus {
    guard(|| {
        let m = &href(model, "model")?.0;
        let x = DVector::from_column_slice(slice(x, len, "x")?);
        let v = m.misfit_value(&x)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seki_model_free(model: *mut SekiModel) {
    free_box(model)
}

unsafe fn new_reg(reg: Regularizer, out: *mut *mut SekiRegularizer) -> FfiResult {
    reg.validate()?;
    put(out, SekiRegularizer(reg))
}

/// `α ‖x‖₁`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_l1(alpha: f64, out: *mut *mut SekiRegularizer) -> SekiStatus {
    guard(|| new_reg(Regularizer::l1(alpha), out))
}

/// `½ w ‖x‖²`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_tikhonov(weight: f64, out: *mut *mut SekiRegularizer) -> SekiStatus {
    guard(|| new_reg(Regularizer::tikhonov(weight), out))
}

/// Isotropic total variation on a `rows × cols` image stored row-major.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_tv2d(
    alpha: f64,
    rows: usize,
    cols: usize,
    out: *mut *mut SekiRegularizer,
) -> SekiStatus {
    guard(|| new_reg(Regularizer::tv2d(alpha, rows, cols), out))
}

/// # Safety
/// `reg` must be a live handle and `x` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_value(
    reg: *const SekiRegularizer,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> SekiStatus {
    guard(|| {
        let r = &href(reg, "reg")?.0;
        let v = r.value(&DVector::from_column_slice(slice(x, len, "x")?))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = v;
        Ok(())
    })
}

/// `prox_{τR}(x)` written to `out` (length `len`).
///
/// # Safety
/// `reg` must be a live handle; `x` and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_prox(
    reg: *const SekiRegularizer,
    x: *const f64,
    len: usize,
    tau: f64,
    out: *mut f64,
) -> SekiStatus {
    guard(|| {
        let r = &href(reg, "reg")?.0;
        let p = r.prox(&DVector::from_column_slice(slice(x, len, "x")?), tau)?;
        copy_out(out_slice(out, len, "out")?, p.as_slice())
    })
}

/// # Safety
/// `reg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seki_regularizer_free(reg: *mut SekiRegularizer) {
    free_box(reg)
}

/// `size` particles drawn i.i.d. from `N(mean, std² I)` with a seeded generator.
///
/// # Safety
/// `mean` must hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_ensemble_gaussian(
    mean: *const f64,
    dim: usize,
    std: f64,
    size: usize,
    seed: u64,
    out: *mut *mut SekiEnsemble,
) -> SekiStatus {
    guard(|| {
        let mean = DVector::from_column_slice(slice(mean, dim, "mean")?);
        if !(std >= 0.0) || !std.is_finite() {
            return Err(SekiError::invalid("std", format!("must be finite and nonnegative, got {std}")).into());
        }
        let mut rng = SeedStream::new(seed).fork("ffi.ensemble");
        put(out, SekiEnsemble(Ensemble::gaussian(&mean, std, size, &mut rng)?))
    })
}

/// Ensemble from a `dim × size` row-major matrix whose columns are the particles.
///
/// # Safety
/// `particles` must hold `dim · size` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_ensemble_from_matrix(
    particles: *const f64,
    dim: usize,
    size: usize,
    out: *mut *mut SekiEnsemble,
) -> SekiStatus {
    guard(|| {
        let p = slice(particles, checked_len(dim, size)?, "particles")?;
        put(out, SekiEnsemble(Ensemble::from_matrix(DMatrix::from_row_slice(dim, size, p))?))
    })
}

/// # Safety
/// `ens` must be a live handle and `out` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn seki_ensemble_mean(ens: *const SekiEnsemble, out: *mut f64, len: usize) -> SekiStatus {
    guard(|| {
        let e = &href(ens, "ens")?.0;
        copy_out(out_slice(out, len, "out")?, e.mean().as_slice())
    })
}

/// # Safety
/// `ens` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seki_ensemble_free(ens: *mut SekiEnsemble) {
    free_box(ens)
}

/// Hybrid SEKI: fixed step `h0` for `burn_in` iterations, then the frozen-covariance
/// mean iteration with steps `∝ (k+1)^{-p}`.
///
/// # Safety
/// `ens`, `model`, `reg` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_run_hybrid(
    ens: *const SekiEnsemble,
    model: *const SekiModel,
    reg: *const SekiRegularizer,
    h0: f64,
    p: f64,
    burn_in: usize,
    iterations: usize,
    scale_rule: SekiScaleRule,
    trace_stride: usize,
    out: *mut *mut SekiTrace,
) -> SekiStatus {
    guard(|| {
        let e = &href(ens, "ens")?.0;
        let m = &href(model, "model")?.0;
        let r = &href(reg, "reg")?.0;
        let rule = match scale_rule {
            SekiScaleRule::Covariance => PhaseTwoScale::Covariance,
            SekiScaleRule::BurnIn => PhaseTwoScale::BurnIn,
        };
        let cfg = SolverConfig::hybrid(h0, p, burn_in, iterations, rule).with_stride(trace_stride);
        put(out, SekiTrace(solver::run_hybrid(&cfg, e, m, r, None)?))
    })
}

/// Subgradient descent with steps `h0 / (k+1)^p` from `x0`.
///
/// # Safety
/// `model`, `reg` must be live handles; `x0` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_run_subgd(
    x0: *const f64,
    len: usize,
    model: *const SekiModel,
    reg: *const SekiRegularizer,
    h0: f64,
    p: f64,
    iterations: usize,
    trace_stride: usize,
    out: *mut *mut SekiTrace,
) -> SekiStatus {
    guard(|| {
        let x0 = DVector::from_column_slice(slice(x0, len, "x0")?);
        let m = &href(model, "model")?.0;
        let r = &href(reg, "reg")?.0;
        let cfg = SolverConfig::new(SolverMode::SubGd, StepSchedule::Polynomial { h0, p }, iterations)
            .with_stride(trace_stride);
        put(out, SekiTrace(solver::run_subgd(&cfg, &x0, m, r, None)?))
    })
}

/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn seki_trace_len(trace: *const SekiTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn seki_trace_record(trace: *const SekiTrace, index: usize, out: *mut SekiRecord) -> SekiStatus {
    guard(|| {
        let t = &href(trace, "trace")?.0;
        let r = t.records.get(index).ok_or_else(|| {
            SekiError::invalid("index", format!("{index} out of range for {} records", t.len()))
        })?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let nan = f64::NAN;
        *out = SekiRecord {
            k: r.k as u64,
            objective: r.objective,
            objective_gap: r.objective_gap.unwrap_or(nan),
            rel_error: r.rel_error.unwrap_or(nan),
            lambda_min: r.lambda_min.unwrap_or(nan),
            lambda_max: r.lambda_max.unwrap_or(nan),
            spread: r.spread.unwrap_or(nan),
            forward_evals: r.forward_evals,
            wall_time_s: r.wall_time,
        };
        Ok(())
    })
}

/// Final iterate (the ensemble mean for SEKI) copied into `out`.
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn seki_trace_final_iterate(trace: *const SekiTrace, out: *mut f64, len: usize) -> SekiStatus {
    guard(|| {
        let t = &href(trace, "trace")?.0;
        copy_out(out_slice(out, len, "out")?, t.final_iterate.as_slice())
    })
}

/// Write the trace as CSV to the NUL-terminated UTF-8 path.
///
/// # Safety
/// `trace` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn seki_trace_write_csv(trace: *const SekiTrace, path: *const c_char) -> SekiStatus {
    guard(|| {
        let t = &href(trace, "trace")?.0;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| SekiError::invalid("path", "not valid UTF-8"))?;
        let file = File::create(path).map_err(SekiError::from)?;
        t.write_csv(BufWriter::new(file))?;
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seki_trace_free(trace: *mut SekiTrace) {
    free_box(trace)
}
