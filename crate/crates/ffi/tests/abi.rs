use std::ffi::{CStr, CString};
use std::ptr;

use seki_ffi::*;

fn last_error() -> String {
    let p = seki_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Scalar lasso `½(x − 2)² + |x|`, minimizer 1.
unsafe fn scalar_problem() -> (*mut SekiModel, *mut SekiRegularizer) {
    let mut model = ptr::null_mut();
    let a = [1.0];
    let y = [2.0];
    assert_eq!(seki_model_new(a.as_ptr(), 1, 1, y.as_ptr(), 1.0, &mut model), SekiStatus::Ok);
    let mut reg = ptr::null_mut();
    assert_eq!(seki_regularizer_l1(1.0, &mut reg), SekiStatus::Ok);
    (model, reg)
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(seki_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn misfit_and_regularizer_values() {
    unsafe {
        let (model, reg) = scalar_problem();
        let x = [0.5];
        let mut v = 0.0;
        assert_eq!(seki_model_misfit(model, x.as_ptr(), 1, &mut v), SekiStatus::Ok);
        assert!((v - 1.125).abs() < 1e-15);
        assert_eq!(seki_regularizer_value(reg, x.as_ptr(), 1, &mut v), SekiStatus::Ok);
        assert!((v - 0.5).abs() < 1e-15);
        let xs = [3.0, -0.2];
        let mut out = [0.0; 2];
        let mut l1 = ptr::null_mut();
        assert_eq!(seki_regularizer_l1(0.5, &mut l1), SekiStatus::Ok);
        assert_eq!(seki_regularizer_prox(l1, xs.as_ptr(), 2, 1.0, out.as_mut_ptr()), SekiStatus::Ok);
        assert_eq!(out, [2.5, 0.0]);
        seki_regularizer_free(l1);
        seki_regularizer_free(reg);
        seki_model_free(model);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut model = ptr::null_mut();
        let y = [1.0];
        assert_eq!(
            seki_model_new(ptr::null(), 1, 1, y.as_ptr(), 1.0, &mut model),
            SekiStatus::NullPointer
        );
        assert!(last_error().contains("a"));
        let a = [1.0];
        assert_eq!(seki_model_new(a.as_ptr(), 1, 1, y.as_ptr(), -1.0, &mut model), SekiStatus::Ok, "σ² > 0");
        seki_model_free(model);
        let mut reg = ptr::null_mut();
        assert_eq!(seki_regularizer_l1(-1.0, &mut reg), SekiStatus::Invalid);
        assert!(reg.is_null());
        let (model, reg) = scalar_problem();
        let x = [1.0, 2.0];
        let mut v = 0.0;
        assert_eq!(seki_model_misfit(model, x.as_ptr(), 2, &mut v), SekiStatus::Dimension);
        assert!(last_error().contains("dimension"));
        assert_eq!(seki_model_misfit(ptr::null(), x.as_ptr(), 1, &mut v), SekiStatus::NullPointer);
        seki_regularizer_free(reg);
        seki_model_free(model);
        seki_model_free(ptr::null_mut());
    }
}

#[test]
fn subgd_and_hybrid_reach_the_scalar_minimizer() {
    unsafe {
        let (model, reg) = scalar_problem();
        let x0 = [0.0];
        let mut trace = ptr::null_mut();
        assert_eq!(seki_run_subgd(x0.as_ptr(), 1, model, reg, 1.0, 1.0, 2000, 10, &mut trace), SekiStatus::Ok);
        let mut x = [0.0];
        assert_eq!(seki_trace_final_iterate(trace, x.as_mut_ptr(), 1), SekiStatus::Ok);
        assert!((x[0] - 1.0).abs() < 1e-2, "{x:?}");
        let n = seki_trace_len(trace);
        assert!(n > 0);
        let mut rec = SekiRecord::default();
        assert_eq!(seki_trace_record(trace, n - 1, &mut rec), SekiStatus::Ok);
        assert_eq!(rec.forward_evals, rec.k + 1);
        assert!(rec.objective_gap.is_nan());
        assert_eq!(seki_trace_record(trace, n, &mut rec), SekiStatus::Invalid);
        seki_trace_free(trace);

        let mut ens = ptr::null_mut();
        let mean = [0.0];
        assert_eq!(seki_ensemble_gaussian(mean.as_ptr(), 1, 0.5, 8, 7, &mut ens), SekiStatus::Ok);
        let mut trace = ptr::null_mut();
        assert_eq!(
            seki_run_hybrid(ens, model, reg, 0.5, 1.0, 50, 2000, SekiScaleRule::BurnIn, 10, &mut trace),
            SekiStatus::Ok
        );
        assert_eq!(seki_trace_final_iterate(trace, x.as_mut_ptr(), 1), SekiStatus::Ok);
        let direct = {
            let mut rng = seki::rng::SeedStream::new(7).fork("ffi.ensemble");
            let e = seki::ensemble::Ensemble::gaussian(&nalgebra::DVector::from_element(1, 0.0), 0.5, 8, &mut rng).unwrap();
            let m = seki::forward::LinearModel::with_noise_std(
                nalgebra::DMatrix::from_element(1, 1, 1.0),
                1.0,
                nalgebra::DVector::from_element(1, 2.0),
            )
            .unwrap();
            let cfg = seki::solver::SolverConfig::hybrid(0.5, 1.0, 50, 2000, seki::solver::PhaseTwoScale::BurnIn)
                .with_stride(10);
            seki::solver::run_hybrid(&cfg, &e, &m, &seki::regularizer::Regularizer::l1(1.0), None).unwrap()
        };
        assert_eq!(x[0].to_bits(), direct.final_iterate[0].to_bits());
        assert_eq!(seki_trace_len(trace), direct.len());
        assert!((x[0] - 1.0).abs() < (x0[0] - 1.0f64).abs());
        let mut short = [0.0; 2];
        assert_eq!(seki_trace_final_iterate(trace, short.as_mut_ptr(), 2), SekiStatus::Dimension);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let c = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(seki_trace_write_csv(trace, c.as_ptr()), SekiStatus::Ok);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), seki_trace_len(trace) + 1);
        seki_trace_free(trace);
        seki_ensemble_free(ens);
        seki_regularizer_free(reg);
        seki_model_free(model);
    }
}

#[test]
fn ensemble_from_matrix_columns_are_particles() {
    unsafe {
        let m = [1.0, 3.0, 10.0, 20.0];
        let mut ens = ptr::null_mut();
        assert_eq!(seki_ensemble_from_matrix(m.as_ptr(), 2, 2, &mut ens), SekiStatus::Ok);
        let mut mean = [0.0; 2];
        assert_eq!(seki_ensemble_mean(ens, mean.as_mut_ptr(), 2), SekiStatus::Ok);
        assert_eq!(mean, [2.0, 15.0]);
        seki_ensemble_free(ens);
    }
}

#[test]
fn augmented_model_adds_prior_rows() {
    unsafe {
        let (model, reg) = scalar_problem();
        let c0 = [4.0];
        let mut aug = ptr::null_mut();
        assert_eq!(seki_model_augment(model, c0.as_ptr(), &mut aug), SekiStatus::Ok);
        assert_eq!(seki_model_dim(aug), 1);
        let x = [2.0];
        let mut v = 0.0;
        assert_eq!(seki_model_misfit(aug, x.as_ptr(), 1, &mut v), SekiStatus::Ok);
        assert!((v - 0.5).abs() < 1e-14, "½·4/4 from the prior block, got {v}");
        let bad = [-1.0];
        let mut out = ptr::null_mut();
        assert_eq!(seki_model_augment(model, bad.as_ptr(), &mut out), SekiStatus::Invalid);
        seki_model_free(aug);
        seki_regularizer_free(reg);
        seki_model_free(model);
    }
}
