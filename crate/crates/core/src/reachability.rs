//! Reachable set of the state under a zero-alarm sensor attack.
//!
//! After `N` steps from rest the state is
//! `x_N = Σ_{i<N} Fⁱ ν_{N−1−i} + Hᵢ L Σ^{1/2} δ̄_{N−1−i}` with
//! `Hᵢ = (F+GK)ⁱ − Fⁱ`, where `ν` ranges over `𝓔(ν̄ R₁)` and `δ̄` over the
//! ball `‖δ̄‖² ≤ α`. The bound `Q*_k` is the minimum-trace ellipsoid of the
//! geometric sum of all terms `i = 0..k`, so it contains every state reachable
//! within `k + 1` steps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ellipsoid::{self, Ellipsoid, SupportDirection, DEGENERATE_TRACE};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{spectral_radius, sym_sqrt, symmetrize};
use crate::lti::{residual_covariance, DetectorConfig, GainPair, NoiseTruncation, PlantModel};

/// Default relative Frobenius tolerance of the settling criterion.
pub const DEFAULT_HORIZON_EPS: f64 = 1e-6;
/// Largest horizon `settling_horizon` will consider.
pub const HORIZON_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilityTerms {
    /// `Qᵢᵛ = ν̄ Fⁱ R₁ Fⁱᵀ`.
    pub q_nu: Vec<DMatrix<f64>>,
    /// `Qᵢᵟ = α Hᵢ L Σ Lᵀ Hᵢᵀ`.
    pub q_delta: Vec<DMatrix<f64>>,
    /// `Hᵢ = (F+GK)ⁱ − Fⁱ`; `H₀ = 0`.
    pub h: Vec<DMatrix<f64>>,
    /// `L Σ Lᵀ`, the attack input shape without the threshold.
    pub attack_input: DMatrix<f64>,
    pub horizon: usize,
}

impl ReachabilityTerms {
    /// All shape terms `i = 0..=k` in one list.
    pub fn merged(&self, k: usize) -> Vec<DMatrix<f64>> {
        let k = k.min(self.horizon);
        self.q_nu[..=k].iter().chain(self.q_delta[..=k].iter()).cloned().collect()
    }

    pub fn dim(&self) -> usize {
        self.attack_input.nrows()
    }
}

/// `[H₀, …, H_k]` by repeated multiplication.
pub fn attack_gain_sequence(model: &PlantModel, gains: &GainPair, k: usize) -> Vec<DMatrix<f64>> {
    let fc = gains.controller_matrix(model);
    let n = model.n();
    let mut fc_pow = DMatrix::identity(n, n);
    let mut f_pow = DMatrix::identity(n, n);
    let mut out = Vec::with_capacity(k + 1);
    out.push(DMatrix::zeros(n, n));
    for _ in 0..k {
        fc_pow = &fc * &fc_pow;
        f_pow = &model.f * &f_pow;
        out.push(&fc_pow - &f_pow);
    }
    out
}

pub fn shape_term_sequences(
    model: &PlantModel,
    gains: &GainPair,
    detector: &DetectorConfig,
    truncation: &NoiseTruncation,
    k: usize,
) -> Result<ReachabilityTerms> {
    gains.require_stable(model)?;
    let rc = residual_covariance(model, &gains.l)?;
    let attack_input = symmetrize(&(&gains.l * &rc.sigma * gains.l.transpose()));
    let h = attack_gain_sequence(model, gains, k);
    let mut q_nu = Vec::with_capacity(k + 1);
    let mut f_pow = DMatrix::identity(model.n(), model.n());
    for _ in 0..=k {
        q_nu.push(symmetrize(&(&f_pow * &model.r1 * f_pow.transpose() * truncation.nu_bar)));
        f_pow = &model.f * &f_pow;
    }
    let q_delta = h.iter().map(|hi| symmetrize(&(hi * &attack_input * hi.transpose() * detector.alpha))).collect();
    Ok(ReachabilityTerms { q_nu, q_delta, h, attack_input, horizon: k })
}

/// Ratio of the geometric tail that bounds the growth of `√tr Q*_k`.
pub fn ratio_test_radius(model: &PlantModel, gains: &GainPair) -> f64 {
    spectral_radius(&gains.controller_matrix(model)).max(spectral_radius(&model.f))
}

/// Running `Q*_k` built one term at a time.
struct RunningBound {
    root_sum: f64,
    normalized: DMatrix<f64>,
    max_trace: f64,
}

impl RunningBound {
    fn new(n: usize) -> Self {
        Self { root_sum: 0.0, normalized: DMatrix::zeros(n, n), max_trace: 0.0 }
    }

    /// Adds a member. Members that are negligible relative to everything seen
    /// so far are skipped, matching `min_trace_sum` on the final list up to
    /// members that only later became negligible.
    fn push(&mut self, q: &DMatrix<f64>) {
        let tr = q.trace();
        self.max_trace = self.max_trace.max(tr);
        if tr <= 0.0 || tr < DEGENERATE_TRACE * self.max_trace {
            return;
        }
        let r = tr.sqrt();
        self.root_sum += r;
        self.normalized += q / r;
    }

    fn shape(&self) -> DMatrix<f64> {
        symmetrize(&(&self.normalized * self.root_sum))
    }
}

/// Smallest `k ≥ 1` with `‖Q*_{k+1} − Q*_k‖_F ≤ eps ‖Q*_k‖_F`.
pub fn settling_horizon(
    model: &PlantModel,
    gains: &GainPair,
    detector: &DetectorConfig,
    truncation: &NoiseTruncation,
    eps: f64,
) -> Result<usize> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon tolerance must be positive, got {eps}")));
    }
    gains.require_stable(model)?;
    let rc = residual_covariance(model, &gains.l)?;
    let attack_input = &gains.l * &rc.sigma * gains.l.transpose() * detector.alpha;
    let noise_input = &model.r1 * truncation.nu_bar;
    let n = model.n();
    let fc = gains.controller_matrix(model);
    let mut fc_pow = DMatrix::<f64>::identity(n, n);
    let mut f_pow = DMatrix::<f64>::identity(n, n);
    let mut bound = RunningBound::new(n);
    let push_term = |bound: &mut RunningBound, f_pow: &DMatrix<f64>, fc_pow: &DMatrix<f64>| {
        let h = fc_pow - f_pow;
        bound.push(&(f_pow * &noise_input * f_pow.transpose()));
        bound.push(&(&h * &attack_input * h.transpose()));
    };
    push_term(&mut bound, &f_pow, &fc_pow);
    let mut current = bound.shape();
    for k in 0..HORIZON_CAP {
        fc_pow = &fc * &fc_pow;
        f_pow = &model.f * &f_pow;
        push_term(&mut bound, &f_pow, &fc_pow);
        let next = bound.shape();
        if (&next - &current).norm() <= eps * current.norm() {
            return Ok(k.max(1));
        }
        current = next;
    }
    Err(Error::NotConverged {
        what: "settling horizon".into(),
        detail: format!(
            "no convergence within {HORIZON_CAP} steps; rho(F+GK) = {:.6}, rho(F) = {:.6}",
            spectral_radius(&fc),
            spectral_radius(&model.f)
        ),
    })
}

/// `Q*` over every stored term.
pub fn reachable_outer_bound(terms: &ReachabilityTerms) -> Result<Ellipsoid> {
    ellipsoid::min_trace_sum(&terms.merged(terms.horizon))
}

/// `𝒥 = Σ_{i=1}^{k} √tr(Hᵢ L Σ Lᵀ Hᵢᵀ)`.
pub fn attack_objective(terms: &ReachabilityTerms) -> f64 {
    terms.h.iter().skip(1).map(|h| (h * &terms.attack_input * h.transpose()).trace().max(0.0).sqrt()).sum()
}

/// Attack objective at the given gains without building the shape terms.
pub fn attack_objective_at(model: &PlantModel, gains: &GainPair, k: usize) -> Result<f64> {
    let rc = residual_covariance(model, &gains.l)?;
    let m = &gains.l * &rc.sigma * gains.l.transpose();
    Ok(attack_gain_sequence(model, gains, k).iter().skip(1).map(|h| (h * &m * h.transpose()).trace().max(0.0).sqrt()).sum())
}

/// `Σᵢ √(ν̄ tr(Fⁱ R₁ Fⁱᵀ))`, the bound when the attack has no effect.
pub fn noise_only_sqrt_trace(terms: &ReachabilityTerms) -> f64 {
    terms.q_nu.iter().map(|q| q.trace().max(0.0).sqrt()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachabilitySummary {
    pub k_star: usize,
    pub q_star: Ellipsoid,
    /// `√tr Q*`.
    pub sqrt_trace_total: f64,
    pub attack_objective: f64,
    pub noise_only_sqrt_trace: f64,
}

impl ReachabilitySummary {
    pub fn from_terms(terms: &ReachabilityTerms) -> Result<Self> {
        let q_star = reachable_outer_bound(terms)?;
        Ok(Self {
            k_star: terms.horizon,
            sqrt_trace_total: q_star.trace().max(0.0).sqrt(),
            q_star,
            attack_objective: attack_objective(terms),
            noise_only_sqrt_trace: noise_only_sqrt_trace(terms),
        })
    }

    pub fn compute(
        model: &PlantModel,
        gains: &GainPair,
        detector: &DetectorConfig,
        truncation: &NoiseTruncation,
        k_star: usize,
    ) -> Result<Self> {
        Self::from_terms(&shape_term_sequences(model, gains, detector, truncation, k_star)?)
    }
}

/// Points of the exact reachable-set boundary, one per direction.
pub fn exact_reachable_boundary(terms: &ReachabilityTerms, directions: &[SupportDirection]) -> Result<Vec<DVector<f64>>> {
    let shapes = terms.merged(terms.horizon);
    directions.iter().map(|d| ellipsoid::minkowski_boundary_point(&shapes, d)).collect()
}

/// How a trial chooses its attack sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStrategy {
    /// Noise and attack maximize `⟨ℓ, x_N⟩` for a random `ℓ`.
    Support,
    /// `δ̄` uniform on the sphere `‖δ̄‖² = α`.
    Boundary,
    /// `δ̄` uniform in the ball `‖δ̄‖² ≤ α`.
    Interior,
    /// `δ̄` aligned with the current state two steps ahead.
    Greedy,
}

impl AttackStrategy {
    const ALL: [AttackStrategy; 4] = [Self::Support, Self::Boundary, Self::Interior, Self::Greedy];

    fn for_trial(trial: usize) -> Self {
        Self::ALL[trial % Self::ALL.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub trials: usize,
    /// Horizon of the bound; trajectories run `k + 1` steps.
    pub k: usize,
    pub seed: u64,
    /// Return the final state of every trial.
    pub keep_samples: bool,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub trials: usize,
    pub k: usize,
    /// Trials whose every state `x_j` lay inside `𝓔(Q*_{j−1})`.
    pub contained: usize,
    pub fraction: f64,
    pub max_quadratic_form: f64,
    pub worst_trial: usize,
    pub max_quadratic_form_by_strategy: Vec<(AttackStrategy, f64)>,
    pub sqrt_trace_bound: f64,
    pub final_states: Vec<DVector<f64>>,
}

struct TrialOutcome {
    contained: bool,
    max_qf: f64,
    last: DVector<f64>,
}

fn unit_sphere(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

fn unit_ball(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let r: f64 = rng.random::<f64>().powf(1.0 / n as f64);
    unit_sphere(rng, n) * r
}

fn scaled_to(v: DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm > 1e-300 {
        v * (radius / norm)
    } else {
        v
    }
}

/// Monte-Carlo check that zero-alarm attack trajectories stay inside the bound.
pub fn simulate_attacked_trajectories(
    model: &PlantModel,
    gains: &GainPair,
    detector: &DetectorConfig,
    truncation: &NoiseTruncation,
    config: &SimulationConfig,
) -> Result<ContainmentReport> {
    if config.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let terms = shape_term_sequences(model, gains, detector, truncation, config.k)?;
    let rc = residual_covariance(model, &gains.l)?;
    let n = model.n();
    let p = model.p();
    let steps = config.k + 1;

    let mut running = RunningBound::new(n);
    let mut bounds = Vec::with_capacity(steps);
    for i in 0..=config.k {
        running.push(&terms.q_nu[i]);
        running.push(&terms.q_delta[i]);
        bounds.push(Ellipsoid::from_parts(running.shape(), DVector::zeros(n)).membership());
    }
    let final_bound = reachable_outer_bound(&terms)?;

    let fc = gains.controller_matrix(model);
    let gk = &model.g * &gains.k;
    let attack_map = &gains.l * &rc.sigma_sqrt;
    let noise_root = sym_sqrt(&(&model.r1 * truncation.nu_bar));
    let noise_shape = &model.r1 * truncation.nu_bar;
    let radius = detector.alpha.sqrt();
    let greedy_map = (&gk * &attack_map).transpose();
    let mut f_pows = Vec::with_capacity(steps);
    f_pows.push(DMatrix::<f64>::identity(n, n));
    for i in 1..steps {
        let next = &model.f * &f_pows[i - 1];
        f_pows.push(next);
    }

    let run = |trial: usize| -> TrialOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(trial as u64);
        let strategy = AttackStrategy::for_trial(trial);
        let ell = unit_sphere(&mut rng, n);
        let mut x = DVector::zeros(n);
        let mut e = DVector::zeros(n);
        let mut max_qf: f64 = 0.0;
        let mut contained = true;
        for t in 0..steps {
            // Input applied at time t reaches x_N through term i = N − 1 − t.
            let i = steps - 1 - t;
            let (nu, delta) = match strategy {
                AttackStrategy::Support => {
                    let a = f_pows[i].transpose() * &ell;
                    let s = a.dot(&(&noise_shape * &a));
                    let nu = if s > 1e-300 { &noise_shape * &a / s.sqrt() } else { DVector::zeros(n) };
                    let b = attack_map.transpose() * terms.h[i].transpose() * &ell;
                    (nu, scaled_to(b, radius))
                }
                AttackStrategy::Boundary => (&noise_root * unit_ball(&mut rng, n), unit_sphere(&mut rng, p) * radius),
                AttackStrategy::Interior => (&noise_root * unit_ball(&mut rng, n), unit_ball(&mut rng, p) * radius),
                AttackStrategy::Greedy => {
                    let nu = &noise_root * unit_ball(&mut rng, n);
                    let dir = if x.norm() > 0.0 { x.clone() } else { ell.clone() };
                    let d = &greedy_map * dir;
                    let d = if d.norm() > 1e-300 { d } else { unit_sphere(&mut rng, p) };
                    (nu, scaled_to(d, radius))
                }
            };
            let x_next = &fc * &x - &gk * &e + &nu;
            e = &model.f * &e - &attack_map * &delta + &nu;
            x = x_next;
            let qf = bounds[t].quadratic_form(&x);
            max_qf = max_qf.max(qf);
            if qf > 1.0 + ellipsoid::MEMBERSHIP_SLACK {
                contained = false;
            }
        }
        TrialOutcome { contained, max_qf, last: x }
    };

    let outcomes = map_indexed(config.exec, config.trials, run);
    let contained = outcomes.iter().filter(|o| o.contained).count();
    let (worst_trial, max_quadratic_form) = outcomes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bq), (i, o)| if o.max_qf > bq { (i, o.max_qf) } else { (bi, bq) });
    let by_strategy = AttackStrategy::ALL
        .iter()
        .enumerate()
        .map(|(s, &strategy)| {
            let q = outcomes.iter().skip(s).step_by(AttackStrategy::ALL.len()).map(|o| o.max_qf).fold(f64::NEG_INFINITY, f64::max);
            (strategy, q)
        })
        .filter(|(_, q)| q.is_finite())
        .collect();
    Ok(ContainmentReport {
        trials: config.trials,
        k: config.k,
        contained,
        fraction: contained as f64 / config.trials as f64,
        max_quadratic_form,
        worst_trial,
        max_quadratic_form_by_strategy: by_strategy,
        sqrt_trace_bound: final_bound.trace().max(0.0).sqrt(),
        final_states: if config.keep_samples { outcomes.into_iter().map(|o| o.last).collect() } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_study;
    use crate::lti::{DetectorConfig, NoiseTruncation};

    fn setup() -> (PlantModel, DetectorConfig, NoiseTruncation) {
        let m = crate::lti::validate_model(&case_study::model()).unwrap().model;
        let d = DetectorConfig::from_false_alarm_rate(0.05, 2).unwrap();
        let t = NoiseTruncation::new(0.95, 2, 2).unwrap();
        (m, d, t)
    }

    #[test]
    fn open_loop_kills_attack_terms() {
        let (m, d, t) = setup();
        let mut gains = case_study::tradeoff_gains_2_11();
        gains.k.fill(0.0);
        let terms = shape_term_sequences(&m, &gains, &d, &t, 10).unwrap();
        assert!(terms.q_delta.iter().all(|q| q.norm() == 0.0));
        assert_eq!(attack_objective(&terms), 0.0);
    }

    #[test]
    fn first_attack_term_is_direct_product() {
        let (m, d, t) = setup();
        let gains = case_study::tradeoff_gains_2_11();
        let terms = shape_term_sequences(&m, &gains, &d, &t, 3).unwrap();
        let rc = residual_covariance(&m, &gains.l).unwrap();
        let gkl = &m.g * &gains.k * &gains.l;
        let direct = &gkl * &rc.sigma * gkl.transpose() * d.alpha;
        assert!((&terms.q_delta[1] - &direct).norm() <= 1e-12 * direct.norm());
        assert_eq!(terms.h[0].norm(), 0.0);
    }

    #[test]
    fn running_bound_matches_min_trace_sum() {
        let (m, d, t) = setup();
        let gains = case_study::tradeoff_gains_2_11();
        let terms = shape_term_sequences(&m, &gains, &d, &t, 20).unwrap();
        let mut running = RunningBound::new(2);
        for i in 0..=20 {
            running.push(&terms.q_nu[i]);
            running.push(&terms.q_delta[i]);
        }
        let direct = reachable_outer_bound(&terms).unwrap();
        assert!((running.shape() - direct.shape()).norm() <= 1e-12 * direct.shape().norm());
    }

    #[test]
    fn zero_model_settles_in_one_step() {
        let z = DMatrix::zeros(2, 2);
        let i = DMatrix::identity(2, 2);
        let m = PlantModel::new(z.clone(), i.clone(), i.clone(), i.clone(), i.clone()).unwrap();
        let (_, d, t) = setup();
        let gains = GainPair::zero(&m);
        assert_eq!(settling_horizon(&m, &gains, &d, &t, 1e-6).unwrap(), 1);
    }
}
