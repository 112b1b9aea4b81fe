mod common;

use std::sync::OnceLock;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use reachsec::case_study;
use reachsec::codesign::*;
use reachsec::lti::*;
use reachsec::performance::*;
use reachsec::reachability::attack_objective_at;
use reachsec::{Error, Execution};

fn case_model() -> PlantModel {
    validate_model(&case_study::model()).unwrap().model
}

fn solver() -> SolverConfig {
    SolverConfig { starts: 8, ..Default::default() }
}

fn case_problem(gamma_bar: f64) -> DesignProblem {
    let m = case_model();
    let detector = DetectorConfig::from_false_alarm_rate(case_study::FALSE_ALARM_RATE, m.p()).unwrap();
    let truncation = NoiseTruncation::new(case_study::TRUNCATION_PROBABILITY, m.n(), m.p()).unwrap();
    DesignProblem::new(m, detector, truncation, gamma_bar, solver())
}

/// Single-input, single-output plant: stability bounds both gains, so the
/// constrained minimum is attained.
fn siso_model() -> PlantModel {
    PlantModel::new(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.0, 0.7]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::identity(2, 2) * 0.1,
        DMatrix::identity(1, 1) * 0.1,
    )
    .unwrap()
}

fn siso_bounds() -> &'static GammaBounds {
    static CELL: OnceLock<GammaBounds> = OnceLock::new();
    CELL.get_or_init(|| gamma_bounds(&siso_model(), &solver()).unwrap())
}

/// Target halfway between `γ*` and `γ₀`.
fn target() -> f64 {
    let b = siso_bounds();
    0.5 * (b.gamma_star() + b.gamma_open)
}

fn siso_problem(gamma_bar: f64) -> DesignProblem {
    let mut problem = generic_problem(siso_model(), gamma_bar, 35);
    problem.bounds = Some(siso_bounds().clone());
    problem
}

fn siso_design() -> &'static TradeoffPoint {
    static CELL: OnceLock<TradeoffPoint> = OnceLock::new();
    CELL.get_or_init(|| design_gains(&siso_problem(target())).unwrap())
}

fn generic_problem(model: PlantModel, gamma_bar: f64, k_star: usize) -> DesignProblem {
    let detector = DetectorConfig::from_false_alarm_rate(0.05, model.p()).unwrap();
    let truncation = NoiseTruncation::new(0.95, model.n(), model.p()).unwrap();
    let mut problem = DesignProblem::new(model, detector, truncation, gamma_bar, solver());
    problem.k_star = k_star;
    problem
}

/// Largest relative error between the residual vector and central
/// differences of the Lagrangian in `(gains, λ)`.
fn residual_fd_error(problem: &DesignProblem, gains: &GainPair, lambda: f64, mode: CovarianceMode) -> f64 {
    let r = stationarity_residuals_with(problem, gains, lambda, mode).unwrap();
    let x = gains.to_vector();
    let omega = |x: &[f64], lam: f64| lagrangian(problem, &GainPair::from_vector(&problem.model, x).unwrap(), lam, mode).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, analytic) in r.iter().enumerate() {
        let fd = if i < x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            (omega(&up, lambda) - omega(&down, lambda)) / (2.0 * h)
        } else {
            (omega(&x, lambda + h) - omega(&x, lambda - h)) / (2.0 * h)
        };
        let scale = analytic.abs().max(fd.abs());
        if scale > 1e-8 {
            worst = worst.max((analytic - fd).abs() / scale);
        }
    }
    worst
}

#[test]
fn case_study_residuals_match_finite_differences() {
    let problem = case_problem(2.11);
    for g in [case_study::min_gain_gains(), case_study::tradeoff_gains_2_11()] {
        for lambda in [0.0, 0.3, -1.7] {
            for mode in [CovarianceMode::Exact, CovarianceMode::Truncated(case_study::HORIZON)] {
                let err = residual_fd_error(&problem, &g, lambda, mode);
                assert!(err <= 1e-5, "relative error {err} at lambda {lambda} ({mode:?})");
            }
        }
    }
}

#[test]
fn random_model_residuals_match_finite_differences() {
    let mut r = rng(61);
    for i in 0..5 {
        let n = 2 + i % 2;
        let m = random_model(&mut r, n, 1 + i % n, 1 + (i + 1) % n, 0.8);
        let g = random_gains(&mut r, &m, 0.4);
        let problem = generic_problem(m, 1.0, 12);
        let err = residual_fd_error(&problem, &g, 0.8, CovarianceMode::Exact);
        assert!(err <= 1e-5, "model {i}: relative error {err}");
    }
}

#[test]
fn zero_controller_has_no_attack_gradient() {
    let problem = case_problem(2.11);
    let mut g = case_study::tradeoff_gains_2_11();
    g.k = DMatrix::zeros(2, 2);
    let r = stationarity_residuals(&problem, &g, 0.0).unwrap();
    assert!(r[4..8].iter().all(|v| *v == 0.0), "{r:?}");
    assert_eq!(attack_objective_at(&problem.model, &g, case_study::HORIZON).unwrap(), 0.0);
}

#[test]
fn design_meets_constraint_as_equality() {
    let p = siso_design();
    let t = target();
    assert_eq!(p.kind, PointKind::Stationary);
    assert!((p.gamma - t).abs() <= 1e-6 * t, "gamma {} target {t}", p.gamma);
    assert!(p.residual_norm <= solver().tolerance);
    assert!(p.projected_hessian_min.unwrap() >= -solver().hessian_tolerance);
    assert!(p.converged_starts >= 1 && p.converged_starts <= p.total_starts);
    assert!(p.attack_objective > 0.0 && p.lambda.is_some());
    assert!(p.gains.stability(&siso_model()).unwrap().is_stable());
    let r = stationarity_residuals(&siso_problem(t), &p.gains, p.lambda.unwrap()).unwrap();
    assert!(r.iter().all(|v| v.abs() <= 1e-6), "{r:?}");
}

#[test]
fn design_beats_random_feasible_gains() {
    let m = siso_model();
    let p = siso_design();
    let t = target();
    let anchor = &siso_bounds().min_gain.gains;
    let mut r = rng(62);
    let mut samples = 0;
    while samples < 100 {
        let noise = random_gains(&mut r, &m, 0.5);
        let g = GainPair::new(&anchor.l + noise.l, &anchor.k + noise.k);
        let gamma = |s: f64| occ_gain(&m, &GainPair::new(&g.l * s, &g.k * s)).map(|o| o.gamma).ok();
        let Some(full) = gamma(1.0) else { continue };
        if full >= t {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match gamma(mid) {
                Some(v) if v > t => lo = mid,
                _ => hi = mid,
            }
        }
        let s = 0.5 * (lo + hi);
        let sample = GainPair::new(&g.l * s, &g.k * s);
        if (occ_gain(&m, &sample).unwrap().gamma - t).abs() > 1e-9 {
            continue;
        }
        let j = attack_objective_at(&m, &sample, 35).unwrap();
        assert!(p.attack_objective <= j + 1e-6, "designed {} sample {j}", p.attack_objective);
        samples += 1;
    }
}

#[test]
fn detector_and_truncation_do_not_move_gains() {
    let base = siso_problem(target());
    let mut changed = base.clone();
    changed.detector = DetectorConfig::with_threshold(base.detector.alpha * 10.0, 1).unwrap();
    changed.truncation = NoiseTruncation::new(0.99, 2, 1).unwrap();
    let a = siso_design();
    let b = design_gains(&changed).unwrap();
    assert_eq!(a.gains.to_vector(), b.gains.to_vector());
    assert!(b.sqrt_trace_qstar > a.sqrt_trace_qstar);
    assert_eq!(a.attack_objective, b.attack_objective);
}

#[test]
fn case_study_search_is_invariant_to_detector_and_truncation() {
    let base = case_problem(2.5);
    let mut changed = base.clone();
    changed.detector = DetectorConfig::with_threshold(base.detector.alpha * 10.0, 2).unwrap();
    changed.truncation = NoiseTruncation::new(0.99, 2, 2).unwrap();
    let (sa, sb) = (design_search(&base).unwrap(), design_search(&changed).unwrap());
    assert!(!sa.candidates.is_empty());
    assert_eq!(sa.candidates.len(), sb.candidates.len());
    for (x, y) in sa.candidates.iter().zip(&sb.candidates) {
        assert_eq!(x.gains.to_vector(), y.gains.to_vector());
        assert_eq!(x.status, y.status);
    }
}

#[test]
fn case_study_search_reports_best_feasible_candidate() {
    let problem = case_problem(2.11);
    let search = design_search(&problem).unwrap();
    let best = search.best_candidate().unwrap();
    assert!((best.gamma - 2.11).abs() <= 1e-6 * 2.11);
    assert!(best.gains.stability(&problem.model).unwrap().is_stable());
    let reference = attack_objective_at(&problem.model, &case_study::tradeoff_gains_2_11(), case_study::HORIZON).unwrap();
    assert!(best.attack_objective < reference, "{} vs reference {reference}", best.attack_objective);
    match design_gains(&problem) {
        Ok(p) => assert_eq!(p.kind, PointKind::Stationary),
        Err(Error::NotConverged { detail, .. }) => assert!(detail.contains("best residual"), "{detail}"),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn search_is_identical_across_execution_modes() {
    let mut seq = siso_problem(target());
    seq.solver.exec = Execution::Sequential;
    let mut par = seq.clone();
    par.solver.exec = Execution::Parallel;
    assert_eq!(design_search(&seq).unwrap(), design_search(&par).unwrap());
}

#[test]
fn endpoints_and_infeasible_targets() {
    let b = siso_bounds();
    let open = design_gains(&siso_problem(b.gamma_open)).unwrap();
    assert_eq!(open.kind, PointKind::Trivial);
    assert_eq!(open.attack_objective, 0.0);
    assert!(open.gains.to_vector().iter().all(|v| *v == 0.0));
    let above = design_gains(&siso_problem(b.gamma_open + 5.0)).unwrap();
    assert_eq!(above.kind, PointKind::Trivial);
    let low = design_gains(&siso_problem(b.gamma_star() - 0.5 * GAMMA_STAR_SLACK)).unwrap();
    assert_eq!(low.kind, PointKind::MinimumGain);
    assert_eq!(low.gains, b.min_gain.gains);
    assert!(matches!(design_gains(&siso_problem(0.5 * b.gamma_star())), Err(Error::Infeasible { .. })));
    assert!(design_gains(&siso_problem(-1.0)).is_err());
    let mut zero_horizon = siso_problem(target());
    zero_horizon.k_star = 0;
    assert!(design_gains(&zero_horizon).is_err());
    assert!(design_search(&siso_problem(b.gamma_open)).unwrap().candidates.is_empty());
}

#[test]
fn single_step_sweep_equals_direct_design() {
    let problem = siso_problem(target());
    let t = target();
    let opts = SweepOptions { gamma_lo: t, gamma_hi: t, steps: 1, warm_start: true };
    let sweep = tradeoff_sweep(&problem.model, &problem.detector, &problem.truncation, &problem.solver, &opts).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].point.as_ref().unwrap(), siso_design());
}

#[test]
fn warm_and_cold_sweeps_agree_and_decrease() {
    let problem = siso_problem(target());
    let b = siso_bounds();
    let run = |warm| {
        let opts = SweepOptions { gamma_lo: b.gamma_star(), gamma_hi: b.gamma_open, steps: 6, warm_start: warm };
        tradeoff_sweep(&problem.model, &problem.detector, &problem.truncation, &problem.solver, &opts).unwrap()
    };
    let (warm, cold) = (run(true), run(false));
    for (w, c) in warm.iter().zip(&cold) {
        assert_eq!(w.gamma_bar, c.gamma_bar);
        let (a, b) = (w.point.as_ref().unwrap(), c.point.as_ref().unwrap());
        assert!(rel_err(a.sqrt_trace_qstar, b.sqrt_trace_qstar) <= 5e-3, "{} vs {}", a.sqrt_trace_qstar, b.sqrt_trace_qstar);
    }
    for pair in warm.windows(2) {
        let (a, b) = (pair[0].point.as_ref().unwrap(), pair[1].point.as_ref().unwrap());
        assert!(b.sqrt_trace_qstar <= a.sqrt_trace_qstar + 1e-6);
    }
    assert_eq!(warm.last().unwrap().point.as_ref().unwrap().kind, PointKind::Trivial);
}

#[test]
fn case_study_has_only_generic_trivial_solutions() {
    let r = trivial_solution_check(&case_model());
    assert_eq!(r.g_rank, 2);
    assert!(r.gk_zero_forces_k_zero);
    assert!(!r.every_k_trivial);
    assert_eq!(r.shared_null_dimension, 0);
    assert!(r.nonzero_example.is_none());
}

#[test]
fn zero_input_matrix_makes_every_controller_trivial() {
    let mut m = case_model();
    m.g = DMatrix::zeros(2, 2);
    let r = trivial_solution_check(&m);
    assert!(r.every_k_trivial);
    assert_eq!(r.g_rank, 0);
    let g = random_gains(&mut rng(63), &m, 0.4);
    assert_eq!(attack_objective_at(&m, &g, 10).unwrap(), 0.0);
}

#[test]
fn shared_null_space_gives_nonzero_trivial_pair() {
    let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.0, 0.3])) * perm;
    let m = PlantModel::new(
        f.clone(),
        DMatrix::from_row_slice(3, 1, &[1.0, 0.5, -0.2]),
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
        DMatrix::identity(3, 3) * 0.1,
        DMatrix::identity(2, 2) * 0.1,
    )
    .unwrap();
    let r = trivial_solution_check(&m);
    assert!(r.shared_null_dimension >= 1);
    let ex = r.nonzero_example.expect("nonzero example");
    assert!(ex.l.norm() > 0.0 && (&m.g * &ex.k).norm() > 0.0);
    let gk = &m.g * &ex.k;
    let mut fp = DMatrix::identity(3, 3);
    for _ in 0..3 {
        assert!((&gk * &fp * &ex.l).norm() <= 1e-12);
        fp = &fp * &f;
    }
    assert!(r.example_residual.unwrap() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn residual_gradient_matches_lagrangian(seed in any::<u64>(), lambda in -3.0f64..3.0) {
        let mut r = rng(seed);
        let m = random_model(&mut r, 2, 1, 2, 0.8);
        let g = random_gains(&mut r, &m, 0.4);
        let problem = generic_problem(m, 1.2, 8);
        prop_assert!(residual_fd_error(&problem, &g, lambda, CovarianceMode::Truncated(15)) <= 1e-5);
    }

    #[test]
    fn constraint_residual_is_scaled_gap(seed in any::<u64>(), gamma_bar in 0.5f64..3.0) {
        let mut r = rng(seed);
        let m = random_model(&mut r, 2, 1, 1, 0.8);
        let g = random_gains(&mut r, &m, 0.4);
        let gamma = occ_gain(&m, &g).unwrap().gamma;
        let problem = generic_problem(m.clone(), gamma_bar, 6);
        let res = stationarity_residuals(&problem, &g, 0.0).unwrap();
        let want = (gamma * gamma - gamma_bar * gamma_bar) * m.noise_power();
        prop_assert!((res[res.len() - 1] - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
}
