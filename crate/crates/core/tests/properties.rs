use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use seki::ensemble::Ensemble;
use seki::forward::LinearModel;
use seki::linalg::eigen_extremes;
use seki::regularizer::Regularizer;
use seki::rng::{SeedStream, SekiRng};
use seki::solver::{seki_step, seki_step_particlewise, RunTrace, TraceRecord};

fn normal_matrix(rng: &mut SekiRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn normal_vector(rng: &mut SekiRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn instance(seed: u64, d: usize, k: usize, j: usize) -> (LinearModel, Ensemble) {
    let mut rng = SeedStream::new(seed).fork("instance");
    let a = normal_matrix(&mut rng, k, d) / (k as f64).sqrt();
    let y = normal_vector(&mut rng, k);
    let model = LinearModel::with_noise_std(a, 1.0, y).unwrap();
    let ens = Ensemble::from_matrix(normal_matrix(&mut rng, d, j)).unwrap();
    (model, ens)
}

fn regularizers(d: usize) -> Vec<Regularizer> {
    let side = (d as f64).sqrt() as usize;
    let mut v = vec![
        Regularizer::l1(0.4),
        Regularizer::tikhonov(1.3),
        Regularizer::sum(vec![Regularizer::l1(0.2), Regularizer::tikhonov(0.5)]),
    ];
    if side * side == d {
        v.push(Regularizer::tv2d(0.3, side, side));
    }
    v
}

/// Orthogonal projector onto the complement of the span of the initial deviations.
fn complement_projector(ens: &Ensemble) -> DMatrix<f64> {
    let dev = ens.deviations();
    let eig = (&dev * dev.transpose()).symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let mut p = DMatrix::identity(dev.nrows(), dev.nrows());
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if *l > tol {
            let c = eig.eigenvectors.column(i);
            p -= &c * c.transpose();
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_symmetric_psd(seed in any::<u64>(), d in 1usize..8, j in 2usize..12) {
        let (_, ens) = instance(seed, d, 3, j);
        let c = ens.stats().covariance;
        prop_assert!((&c - c.transpose()).amax() <= 1e-12 * (1.0 + c.amax()));
        let (lo, _) = eigen_extremes(&c);
        prop_assert!(lo >= -1e-10);
    }

    #[test]
    fn covariance_is_shift_invariant(seed in any::<u64>(), d in 1usize..6, j in 2usize..10, shift in -50.0..50.0f64) {
        let (_, ens) = instance(seed, d, 3, j);
        let shifted = Ensemble::from_matrix(ens.particles().add_scalar(shift)).unwrap();
        let (a, b) = (ens.stats().covariance, shifted.stats().covariance);
        prop_assert!((&a - &b).amax() <= 1e-10 * (1.0 + shift.abs()).powi(2));
    }

    #[test]
    fn steps_stay_in_initial_affine_span(seed in any::<u64>(), d in 3usize..9, j in 2usize..5, h in 0.0..0.5f64) {
        let (model, ens0) = instance(seed, d, 4, j);
        let p = complement_projector(&ens0);
        let m0 = ens0.mean();
        let reg = Regularizer::l1(0.3);
        let mut a = ens0.clone();
        let mut b = ens0.clone();
        for _ in 0..5 {
            a = seki_step(&a, &model, &reg, h).unwrap();
            b = seki_step_particlewise(&b, &model, &reg, h).unwrap();
        }
        for e in [&a, &b] {
            for col in e.particles().column_iter() {
                let off = &p * (col - &m0);
                prop_assert!(off.norm() <= 1e-8 * (1.0 + col.norm()), "off-span residual {}", off.norm());
            }
        }
    }

    #[test]
    fn regularizers_are_nonnegative_and_convex(seed in any::<u64>(), lam in 0.0..=1.0f64) {
        let d = 9;
        let mut rng = SeedStream::new(seed).fork("convex");
        let x = normal_vector(&mut rng, d) * 3.0;
        let z = normal_vector(&mut rng, d) * 3.0;
        for reg in regularizers(d) {
            let mid = &x * lam + &z * (1.0 - lam);
            let (vx, vz, vm) = (reg.value(&x).unwrap(), reg.value(&z).unwrap(), reg.value(&mid).unwrap());
            prop_assert!(vx >= 0.0 && vz >= 0.0);
            prop_assert!(vm <= lam * vx + (1.0 - lam) * vz + 1e-10, "{}", reg.describe());
            prop_assert_eq!(reg.value(&DVector::zeros(d)).unwrap(), 0.0);
        }
    }

    #[test]
    fn subgradient_inequality(seed in any::<u64>()) {
        let d = 16;
        let mut rng = SeedStream::new(seed).fork("subgradient");
        let x = normal_vector(&mut rng, d).map(|v| (2.0 * v).round() / 2.0);
        for reg in regularizers(d) {
            let g = reg.subgradient(&x).unwrap();
            for _ in 0..20 {
                let z = normal_vector(&mut rng, d) * 2.0;
                let slack = reg.value(&z).unwrap() - reg.value(&x).unwrap() - g.dot(&(&z - &x));
                prop_assert!(slack >= -1e-10, "{}: slack {slack}", reg.describe());
            }
        }
    }

    #[test]
    fn l1_subgradient_has_bounded_norm(seed in any::<u64>(), d in 1usize..30, alpha in 0.0..3.0f64) {
        let mut rng = SeedStream::new(seed).fork("bound");
        let x = normal_vector(&mut rng, d);
        let g = Regularizer::l1(alpha).subgradient(&x).unwrap();
        prop_assert!(g.norm() <= alpha * (d as f64).sqrt() + 1e-12);
    }

    #[test]
    fn prox_is_nonexpansive_and_resolvent_consistent(seed in any::<u64>(), tau in 0.01..2.0f64) {
        let d = 9;
        let mut rng = SeedStream::new(seed).fork("prox");
        let x = normal_vector(&mut rng, d) * 2.0;
        let z = normal_vector(&mut rng, d) * 2.0;
        for reg in regularizers(d) {
            let (px, pz) = (reg.prox(&x, tau).unwrap(), reg.prox(&z, tau).unwrap());
            prop_assert!((&px - &pz).norm() <= (&x - &z).norm() * (1.0 + 1e-8) + 1e-10, "{}", reg.describe());
            let back = &px + reg.yosida(&x, tau).unwrap() * tau;
            prop_assert!((back - &x).amax() <= 1e-14 * (1.0 + x.amax()));
            prop_assert!(reg.moreau_envelope(&x, tau).unwrap() <= reg.value(&x).unwrap() + 1e-12);
        }
    }

    #[test]
    fn yosida_is_lipschitz(seed in any::<u64>(), tau in 0.01..2.0f64) {
        let mut rng = SeedStream::new(seed).fork("yosida");
        let x = normal_vector(&mut rng, 6);
        let z = normal_vector(&mut rng, 6);
        let reg = Regularizer::l1(0.8);
        let diff = (reg.yosida(&x, tau).unwrap() - reg.yosida(&z, tau).unwrap()).norm();
        prop_assert!(diff <= (&x - &z).norm() / tau + 1e-12);
    }

    #[test]
    fn trace_csv_round_trip(
        rows in proptest::collection::vec(
            (any::<u32>(), -1e300..1e300f64, proptest::option::of(0.0..1e10f64), any::<u32>()),
            0..30,
        ),
    ) {
        let mut t = RunTrace::default();
        t.meta("seed", 7);
        t.meta("mode", "seki");
        for (k, obj, gap, evals) in rows {
            t.records.push(TraceRecord {
                k: k as usize,
                objective: obj,
                objective_gap: gap,
                rel_error: gap.map(|g| g / 3.0),
                lambda_min: None,
                lambda_max: gap,
                spread: Some(obj.abs()),
                forward_evals: evals as u64,
                wall_time: 0.0,
            });
        }
        let back = RunTrace::from_csv(&t.to_csv()).unwrap();
        prop_assert_eq!(&back.header, &t.header);
        prop_assert_eq!(&back.records, &t.records);
    }
}

