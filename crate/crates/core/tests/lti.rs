mod common;

use approx::assert_relative_eq;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use reachsec::case_study;
use reachsec::linalg::{eigenvalues, min_sym_eigenvalue};
use reachsec::lti::*;

fn case_model() -> ValidatedModel {
    validate_model(&case_study::model()).unwrap()
}

#[test]
fn case_study_passes_with_clamped_process_noise() {
    let raw = case_study::model();
    let det = raw.r1.determinant();
    assert!(det < 0.0 && (det + 1.6e-5).abs() < 1e-6, "det R1 = {det}");
    let v = case_model();
    assert!(v.diagnostics.passed(), "{:?}", v.diagnostics.failures());
    assert_eq!(v.diagnostics.adjustments.len(), 1);
    assert_eq!(v.diagnostics.adjustments[0].name, "R1");
    assert!(min_sym_eigenvalue(&v.model.r1) > 0.0);
    assert!(!v.diagnostics.warnings.is_empty());
}

#[test]
fn detector_threshold_of_case_study() {
    let d = DetectorConfig::from_false_alarm_rate(case_study::FALSE_ALARM_RATE, 2).unwrap();
    assert!((d.alpha - 5.99).abs() < 5e-3);
    assert_relative_eq!(d.alpha, -2.0 * 0.05f64.ln(), max_relative = 1e-12);
    let t = NoiseTruncation::new(case_study::TRUNCATION_PROBABILITY, 2, 2).unwrap();
    assert_relative_eq!(t.nu_bar, d.alpha, max_relative = 1e-12);
    assert_relative_eq!(t.eta_bar, d.alpha, max_relative = 1e-12);
}

#[test]
fn deadbeat_observer_covariance() {
    let m = case_model().model;
    let l = &m.f * m.c.clone().try_inverse().unwrap();
    let p_e = estimation_error_covariance(&m, &l).unwrap();
    let want = &l * &m.r2 * l.transpose() + &m.r1;
    assert_relative_eq!(p_e, want, max_relative = 1e-12, epsilon = 1e-15);
}

#[test]
fn case_study_covariance_matches_fixed_point_iteration() {
    let m = case_model().model;
    let l = case_study::min_gain_gains().l;
    let p_e = estimation_error_covariance(&m, &l).unwrap();
    let a = &m.f - &l * &m.c;
    let q = &l * &m.r2 * l.transpose() + &m.r1;
    let mut p = DMatrix::zeros(2, 2);
    for _ in 0..1_000_000 {
        p = &a * &p * a.transpose() + &q;
    }
    assert!((&p - &p_e).norm() <= 1e-9 * p_e.norm());
    let resid = &a * &p_e * a.transpose() + &q - &p_e;
    assert!(resid.norm() <= 1e-12 * p_e.norm());
}

#[test]
fn case_study_residual_square_root() {
    let m = case_model().model;
    let rc = residual_covariance(&m, &case_study::min_gain_gains().l).unwrap();
    let want = &m.c * &rc.p_e * m.c.transpose() + &m.r2;
    assert_relative_eq!(rc.sigma, want, max_relative = 1e-14);
    assert!((&rc.sigma_sqrt * &rc.sigma_sqrt - &rc.sigma).norm() <= 1e-12 * rc.sigma.norm());
    assert_relative_eq!(rc.sigma_sqrt, rc.sigma_sqrt.transpose(), epsilon = 1e-15);
}

#[test]
fn case_study_gains_are_stable() {
    let m = case_model().model;
    for g in [case_study::min_gain_gains(), case_study::tradeoff_gains_2_11()] {
        let cl = assemble_closed_loop(&m, &g).unwrap();
        assert!(reachsec::linalg::spectral_radius(&cl.a) < 1.0);
    }
}

#[test]
fn closed_loop_structure() {
    let m = random_model(&mut rng(21), 3, 2, 2, 0.9);
    let g = random_gains(&mut rng(22), &m, 0.2);
    let cl = assemble_closed_loop(&m, &g).unwrap();
    let fc = g.controller_matrix(&m);
    let gk = &m.g * &g.k;
    let fo = g.observer_matrix(&m);
    assert_eq!(cl.a.view((0, 0), (3, 3)), fc);
    assert_eq!(cl.a.view((0, 3), (3, 3)), -gk);
    assert_eq!(cl.a.view((3, 0), (3, 3)), DMatrix::<f64>::zeros(3, 3));
    assert_eq!(cl.a.view((3, 3), (3, 3)), fo);
    let lr2l = &g.l * &m.r2 * g.l.transpose();
    assert_eq!(cl.r.view((0, 0), (3, 3)), m.r1);
    assert_eq!(cl.r.view((0, 3), (3, 3)), m.r1);
    assert_relative_eq!(cl.r.view((3, 3), (3, 3)).into_owned(), &m.r1 + lr2l, epsilon = 1e-15);
}

#[test]
fn block_triangular_spectrum_for_random_gains() {
    let mut r = rng(23);
    let m = random_model(&mut r, 3, 2, 2, 0.9);
    for _ in 0..100 {
        let g = random_gains(&mut r, &m, 0.3);
        let cl = assemble_closed_loop(&m, &g).unwrap();
        let mut stacked: Vec<_> = eigenvalues(&cl.a);
        let mut parts: Vec<_> = eigenvalues(&g.controller_matrix(&m));
        parts.extend(eigenvalues(&g.observer_matrix(&m)));
        let key = |z: &num_complex::Complex64| (z.re, z.im);
        stacked.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        parts.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for (a, b) in stacked.iter().zip(&parts) {
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chi2_quantile_increases(dof in 1u32..12, a in 0.01f64..0.98, b in 0.01f64..0.98) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(chi2_quantile(dof, lo).unwrap() < chi2_quantile(dof, hi).unwrap());
        prop_assert!(chi2_quantile(dof, lo).unwrap() < chi2_quantile(dof + 1, lo).unwrap());
    }

    #[test]
    fn chi2_quantile_inverts_cdf(dof in 1u32..30, prob in 0.0f64..0.999) {
        let x = chi2_quantile(dof, prob).unwrap();
        prop_assert!((chi2_cdf(dof, x) - prob).abs() <= 1e-10 * prob.max(1e-3));
    }

    #[test]
    fn estimation_covariance_is_fixed_point(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_model(&mut r, 3, 1, 2, 0.9);
        let g = random_gains(&mut r, &m, 0.3);
        let p_e = estimation_error_covariance(&m, &g.l).unwrap();
        let a = g.observer_matrix(&m);
        let resid = &a * &p_e * a.transpose() + &g.l * &m.r2 * g.l.transpose() + &m.r1 - &p_e;
        prop_assert!(resid.norm() <= 1e-12 * p_e.norm());
        prop_assert!(min_sym_eigenvalue(&(&p_e - &m.r1)) >= -1e-12 * p_e.norm());
    }
}
