//! Observer/controller co-design: minimize the attack objective
//! `𝒥 = Σ_{q=1}^{k*} √tr(H_q L Σ Lᵀ H_qᵀ)` subject to the performance
//! equality `𝒞 = tr(C 𝐏ₓ Cᵀ) + tr R₂ − γ̄² (tr R₁ + tr R₂) = 0`.
//!
//! Neither the detector threshold nor the noise truncation enters `𝒥` or
//! `𝒞`, so the designed gains depend only on the plant, `γ̄` and `k*`.
//! Solves work in a scaled form where the constraint is `c = γ² − γ̄²` and
//! the multiplier is `λ_s = λ (tr R₁ + tr R₂)`.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::linalg::{self, null_space, powers, rank, symmetrize};
use crate::lti::{CovarianceMode, DetectorConfig, GainPair, NoiseTruncation, PlantModel};
use crate::optim::{self, BfgsOptions, RootOptions};
use crate::performance::{
    covariance_partials_with, gamma_from_state_covariance, min_occ_gain, occ_gain, occ_gradient, open_loop_gain, random_stable_gains,
    start_rng, MinGainResult, SolverConfig,
};
use crate::reachability::{attack_gain_sequence, ReachabilitySummary};
use crate::ellipsoid::DEGENERATE_TRACE;

/// Distance below `γ*` still treated as `γ*`.
pub const GAMMA_STAR_SLACK: f64 = 1e-3;

/// Ends of the trade-off interval `[γ*, γ₀]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaBounds {
    pub gamma_open: f64,
    pub min_gain: MinGainResult,
}

impl GammaBounds {
    pub fn gamma_star(&self) -> f64 {
        self.min_gain.gamma_star
    }
}

pub fn gamma_bounds(model: &PlantModel, solver: &SolverConfig) -> Result<GammaBounds> {
    Ok(GammaBounds { gamma_open: open_loop_gain(model)?, min_gain: min_occ_gain(model, solver)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub model: PlantModel,
    pub detector: DetectorConfig,
    pub truncation: NoiseTruncation,
    pub gamma_bar: f64,
    pub k_star: usize,
    pub solver: SolverConfig,
    /// Precomputed interval ends; computed on demand otherwise.
    pub bounds: Option<GammaBounds>,
    /// Extra start, typically the solution at a neighboring `γ̄`.
    pub warm_start: Option<GainPair>,
}

impl DesignProblem {
    pub fn new(model: PlantModel, detector: DetectorConfig, truncation: NoiseTruncation, gamma_bar: f64, solver: SolverConfig) -> Self {
        Self { model, detector, truncation, gamma_bar, k_star: solver.horizon, solver, bounds: None, warm_start: None }
    }
}

/// How a design point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    /// Constrained stationary point with `γ = γ̄`.
    Stationary,
    /// `γ̄ ≥ γ₀`: `L = 0`, `K = 0` meets the bound with no attack impact.
    Trivial,
    /// `γ̄` within the slack of `γ*`: the minimum-gain pair.
    MinimumGain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub gamma_bar: f64,
    pub gains: GainPair,
    /// Multiplier of `𝒞`; absent where the constraint gradient vanishes or
    /// the constraint is inactive.
    pub lambda: Option<f64>,
    pub sqrt_trace_qstar: f64,
    pub attack_objective: f64,
    /// `‖(∇Ω, c)‖∞` in scaled units.
    pub residual_norm: f64,
    /// `γ` of the returned gains from the exact covariance.
    pub gamma: f64,
    pub kind: PointKind,
    pub projected_hessian_min: Option<f64>,
    pub converged_starts: usize,
    pub total_starts: usize,
}

/// Everything the solver needs at one gain vector.
struct Evaluation {
    objective: f64,
    grad_objective: Vec<f64>,
    /// `γ²` in the chosen covariance mode.
    gamma_sq: f64,
    /// `∇γ²`, equal to `∇𝒞 / (tr R₁ + tr R₂)`.
    grad_gamma_sq: Vec<f64>,
}

fn evaluate(model: &PlantModel, gains: &GainPair, k_star: usize, mode: CovarianceMode) -> Result<Evaluation> {
    let bundle = covariance_partials_with(model, gains, mode)?;
    let n = model.n();
    let (p, m) = (model.p(), model.m());
    let scale = model.noise_power();
    let p_x = bundle.p_stack.view((0, 0), (n, n)).into_owned();
    let p_e = bundle.p_stack.view((n, n), (n, n)).into_owned();
    let gamma_sq = gamma_from_state_covariance(model, &p_x).powi(2);
    let grad_gamma_sq: Vec<f64> = occ_gradient(model, &bundle).into_iter().map(|g| g / scale).collect();

    let l = &gains.l;
    let c = &model.c;
    let sigma = symmetrize(&(c * &p_e * c.transpose() + &model.r2));
    let attack_input = symmetrize(&(l * &sigma * l.transpose()));
    let h = attack_gain_sequence(model, gains, k_star);
    let traces: Vec<f64> = h.iter().map(|hq| (hq * &attack_input * hq.transpose()).trace()).collect();
    let max_trace = traces.iter().copied().fold(0.0, f64::max);
    let active: Vec<usize> = (1..=k_star).filter(|&q| traces[q] > 0.0 && traces[q] >= DEGENERATE_TRACE * max_trace).collect();
    let objective: f64 = active.iter().map(|&q| traces[q].sqrt()).sum();

    // W = Σ_q H_qᵀ H_q / (2√t_q) carries the L-dependence.
    let mut w = DMatrix::zeros(n, n);
    for &q in &active {
        w += h[q].transpose() * &h[q] / (2.0 * traces[q].sqrt());
    }
    let direct = &w * l * &sigma * 2.0;
    let chain = c.transpose() * l.transpose() * &w * l * c;
    let mut grad = Vec::with_capacity(n * p + m * n);
    for i in 0..n {
        for j in 0..p {
            let dp_e = bundle.d_l[i * p + j].view((n, n), (n, n));
            grad.push(direct[(i, j)] + (&chain * dp_e).trace());
        }
    }

    // Y = Σ_q Σ_{r=1}^{q} Fc^{q−r} (L Σ Lᵀ H_qᵀ / √t_q) Fc^{r−1} G gives ∂𝒥/∂K_uv = Y_vu.
    let fc_pow = powers(&gains.controller_matrix(model), k_star);
    let mut y = DMatrix::zeros(n, n);
    for &q in &active {
        let nq = &attack_input * h[q].transpose() / traces[q].sqrt();
        for r in 1..=q {
            y += &fc_pow[q - r] * &nq * &fc_pow[r - 1];
        }
    }
    let y = y * &model.g;
    for u in 0..m {
        for v in 0..n {
            grad.push(y[(v, u)]);
        }
    }
    Ok(Evaluation { objective, grad_objective: grad, gamma_sq, grad_gamma_sq })
}

/// Stationarity system `[∂Ω/∂L; ∂Ω/∂K; 𝒞]` at `(L, K, λ)` with the exact covariance.
pub fn stationarity_residuals(problem: &DesignProblem, gains: &GainPair, lambda: f64) -> Result<Vec<f64>> {
    stationarity_residuals_with(problem, gains, lambda, CovarianceMode::Exact)
}

/// Same as [`stationarity_residuals`] in the given covariance mode. The first
/// `np` entries are `∂Ω/∂L_ij`, the next `mn` are `∂Ω/∂K_uv`, the last is `𝒞`.
pub fn stationarity_residuals_with(problem: &DesignProblem, gains: &GainPair, lambda: f64, mode: CovarianceMode) -> Result<Vec<f64>> {
    gains.check_dims(&problem.model)?;
    let ev = evaluate(&problem.model, gains, problem.k_star, mode)?;
    let scale = problem.model.noise_power();
    let mut out: Vec<f64> = ev.grad_objective.iter().zip(&ev.grad_gamma_sq).map(|(j, c)| j + lambda * scale * c).collect();
    out.push((ev.gamma_sq - problem.gamma_bar * problem.gamma_bar) * scale);
    Ok(out)
}

/// `Ω = 𝒥 + λ𝒞` in the given mode; the finite-difference counterpart of the residuals.
pub fn lagrangian(problem: &DesignProblem, gains: &GainPair, lambda: f64, mode: CovarianceMode) -> Result<f64> {
    let ev = evaluate(&problem.model, gains, problem.k_star, mode)?;
    let scale = problem.model.noise_power();
    Ok(ev.objective + lambda * (ev.gamma_sq - problem.gamma_bar * problem.gamma_bar) * scale)
}

/// Outcome of one start of the design search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    /// Stationary with a positive semidefinite projected Hessian.
    Minimum,
    /// Stationary, but the projected Hessian has a negative direction.
    Saddle,
    /// The stationarity residual stayed above the tolerance.
    Unconverged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignCandidate {
    pub start: usize,
    pub gains: GainPair,
    /// Multiplier of `𝒞`.
    pub lambda: f64,
    /// `‖(∇Ω, c)‖∞` in scaled units.
    pub residual: f64,
    pub attack_objective: f64,
    pub gamma: f64,
    pub projected_hessian_min: Option<f64>,
    pub status: CandidateStatus,
}

/// Every start of one design run, in start order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSearch {
    pub gamma_bar: f64,
    pub candidates: Vec<DesignCandidate>,
}

impl DesignSearch {
    /// Accepted minimum with the smallest attack objective.
    pub fn best_minimum(&self) -> Option<&DesignCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.status == CandidateStatus::Minimum)
            .min_by(|a, b| a.attack_objective.total_cmp(&b.attack_objective).then_with(|| lexicographic(&a.gains, &b.gains)))
    }

    /// Candidate with the smallest residual, minima first.
    pub fn best_candidate(&self) -> Option<&DesignCandidate> {
        self.best_minimum().or_else(|| {
            self.candidates.iter().min_by(|a, b| a.residual.total_cmp(&b.residual).then_with(|| lexicographic(&a.gains, &b.gains)))
        })
    }

    pub fn count(&self, status: CandidateStatus) -> usize {
        self.candidates.iter().filter(|c| c.status == status).count()
    }
}

/// Gain pair on the path `s ↦ (s·L, K)` or `(L, s·K)` whose `γ` equals `target`.
fn homotopy_start(model: &PlantModel, anchor: &GainPair, scale_l: bool, scale_k: bool, target: f64) -> Option<GainPair> {
    let at = |s: f64| {
        let mut g = anchor.clone();
        if scale_l {
            g.l *= s;
        }
        if scale_k {
            g.k *= s;
        }
        g
    };
    let gamma = |s: f64| occ_gain(model, &at(s)).ok().map(|r| r.gamma);
    let (mut lo, mut hi) = (0.0, 1.0);
    let (g_lo, g_hi) = (gamma(lo)?, gamma(hi)?);
    if !((g_lo - target) * (g_hi - target) <= 0.0) {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g = gamma(mid)?;
        if (g - target) * (g_lo - target) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(at(0.5 * (lo + hi)))
}

/// Gains further than this multiple of the start norm end the penalty phase.
const DIVERGENCE_FACTOR: f64 = 50.0;

fn solve_from(problem: &DesignProblem, index: usize, start: &GainPair) -> Option<DesignCandidate> {
    let model = &problem.model;
    let cfg = &problem.solver;
    let k = problem.k_star;
    let target = problem.gamma_bar * problem.gamma_bar;
    let scale = model.noise_power();
    let eval = |x: &[f64]| -> Option<Evaluation> {
        let g = GainPair::from_vector(model, x).ok()?;
        evaluate(model, &g, k, CovarianceMode::Exact).ok()
    };
    let residual = |z: &[f64]| -> Option<Vec<f64>> {
        let (xs, lam) = z.split_at(z.len() - 1);
        let ev = eval(xs)?;
        let mut r: Vec<f64> = ev.grad_objective.iter().zip(&ev.grad_gamma_sq).map(|(a, b)| a + lam[0] * b).collect();
        r.push(ev.gamma_sq - target);
        Some(r)
    };
    let root_opts = RootOptions { tolerance: cfg.tolerance, ..Default::default() };
    let least_squares_lambda = |ev: &Evaluation| {
        let gc2: f64 = ev.grad_gamma_sq.iter().map(|v| v * v).sum();
        if gc2 > 0.0 {
            -ev.grad_objective.iter().zip(&ev.grad_gamma_sq).map(|(a, b)| a * b).sum::<f64>() / gc2
        } else {
            1.0
        }
    };

    let x0 = start.to_vector();
    let ev0 = eval(&x0)?;
    let mut z = x0.clone();
    z.push(least_squares_lambda(&ev0));
    let mut best = optim::solve_root(&residual, &z, &root_opts)?;

    if !best.converged {
        let radius = DIVERGENCE_FACTOR * (1.0 + x0.iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut x = x0.clone();
        let mut lambda = z[z.len() - 1];
        let mut mu = 10.0;
        let mut last_violation = f64::INFINITY;
        let bfgs_opts = BfgsOptions { max_iterations: cfg.max_iterations, gradient_tolerance: 1e-7, max_step: 0.25 };
        for _ in 0..25 {
            let (lam, pen) = (lambda, mu);
            let merit = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
                if x.iter().map(|v| v * v).sum::<f64>().sqrt() > radius {
                    return None;
                }
                let ev = eval(x)?;
                let c = ev.gamma_sq - target;
                let w = lam + pen * c;
                let grad = ev.grad_objective.iter().zip(&ev.grad_gamma_sq).map(|(a, b)| a + w * b).collect();
                Some((ev.objective + lam * c + 0.5 * pen * c * c, grad))
            };
            let out = optim::bfgs(merit, &x, &bfgs_opts)?;
            x = out.x;
            let c = eval(&x)?.gamma_sq - target;
            lambda += mu * c;
            if c.abs() <= 1e-9 && out.gradient_inf <= 1e-6 {
                break;
            }
            if c.abs() > 0.25 * last_violation {
                mu = (mu * 10.0).min(1e6);
            }
            last_violation = c.abs();
        }
        let mut z = x.clone();
        z.push(lambda);
        if let Some(polished) = optim::solve_root(&residual, &z, &root_opts) {
            if polished.residual_inf < best.residual_inf {
                best = polished;
            }
        }
    }

    let (xs, lam) = best.x.split_at(best.x.len() - 1);
    let lambda_scaled = lam[0];
    let gains = GainPair::from_vector(model, xs).ok()?;
    if !gains.stability(model).ok()?.is_stable() {
        return None;
    }
    let ev = eval(xs)?;
    let mut candidate = DesignCandidate {
        start: index,
        gains,
        lambda: lambda_scaled / scale,
        residual: best.residual_inf,
        attack_objective: ev.objective,
        gamma: ev.gamma_sq.sqrt(),
        projected_hessian_min: None,
        status: CandidateStatus::Unconverged,
    };
    if !best.converged {
        return Some(candidate);
    }

    // Second-order check on the tangent space of the constraint.
    let grad_omega = |x: &[f64]| -> Option<Vec<f64>> {
        let ev = eval(x)?;
        Some(ev.grad_objective.iter().zip(&ev.grad_gamma_sq).map(|(a, b)| a + lambda_scaled * b).collect())
    };
    let hess = optim::central_hessian(grad_omega, xs, cfg.hessian_step)?;
    let normal = DMatrix::from_row_slice(1, xs.len(), &ev.grad_gamma_sq);
    let basis = null_space(&normal, 1e-12);
    let projected = symmetrize(&(basis.transpose() * &hess * &basis));
    let hessian_min = linalg::min_sym_eigenvalue(&projected);
    candidate.projected_hessian_min = Some(hessian_min);
    candidate.status = if hessian_min < -cfg.hessian_tolerance * projected.norm().max(1.0) {
        CandidateStatus::Saddle
    } else {
        CandidateStatus::Minimum
    };
    Some(candidate)
}

fn lexicographic(a: &GainPair, b: &GainPair) -> Ordering {
    let (va, vb) = (a.to_vector(), b.to_vector());
    va.iter().zip(vb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn finish(problem: &DesignProblem, gains: GainPair, kind: PointKind) -> Result<TradeoffPoint> {
    let summary = ReachabilitySummary::compute(&problem.model, &gains, &problem.detector, &problem.truncation, problem.k_star)?;
    let gamma = occ_gain(&problem.model, &gains)?.gamma;
    Ok(TradeoffPoint {
        gamma_bar: problem.gamma_bar,
        gains,
        lambda: None,
        sqrt_trace_qstar: summary.sqrt_trace_total,
        attack_objective: summary.attack_objective,
        residual_norm: 0.0,
        gamma,
        kind,
        projected_hessian_min: None,
        converged_starts: 0,
        total_starts: 0,
    })
}

enum Resolved {
    Point(TradeoffPoint),
    Search(DesignSearch),
}

fn check_problem(problem: &DesignProblem) -> Result<GammaBounds> {
    if problem.k_star < 1 {
        return Err(Error::InvalidArgument("design horizon k* must be at least 1".into()));
    }
    if !(problem.gamma_bar.is_finite() && problem.gamma_bar > 0.0) {
        return Err(Error::InvalidArgument(format!("performance target must be positive, got {}", problem.gamma_bar)));
    }
    let bounds = match &problem.bounds {
        Some(b) => b.clone(),
        None => gamma_bounds(&problem.model, &problem.solver)?,
    };
    if problem.gamma_bar < bounds.gamma_star() - GAMMA_STAR_SLACK {
        return Err(Error::Infeasible { gamma_bar: problem.gamma_bar, gamma_star: bounds.gamma_star(), gamma_open: bounds.gamma_open });
    }
    Ok(bounds)
}

fn resolve(problem: &DesignProblem) -> Result<Resolved> {
    let model = &problem.model;
    let bounds = check_problem(problem)?;
    if problem.gamma_bar >= bounds.gamma_open {
        return finish(problem, GainPair::zero(model), PointKind::Trivial).map(Resolved::Point);
    }
    if problem.gamma_bar <= bounds.gamma_star() {
        return finish(problem, bounds.min_gain.gains.clone(), PointKind::MinimumGain).map(Resolved::Point);
    }

    let anchor = &bounds.min_gain.gains;
    let mut seeds: Vec<GainPair> = Vec::new();
    if let Some(w) = &problem.warm_start {
        seeds.push(w.clone());
    }
    for (sl, sk) in [(true, false), (false, true), (true, true)] {
        if let Some(g) = homotopy_start(model, anchor, sl, sk, problem.gamma_bar) {
            seeds.push(g);
        }
    }
    if seeds.is_empty() {
        seeds.push(anchor.clone());
    }
    let fixed = seeds.len();
    let total = fixed + problem.solver.starts;
    let run = |index: usize| -> Option<DesignCandidate> {
        let start = if index < fixed {
            seeds[index].clone()
        } else {
            let mut rng = start_rng(problem.solver.seed, index);
            let center = &seeds[index % fixed];
            let spread = [0.05, 0.2, 0.5][index % 3];
            random_stable_gains(model, center, spread, &mut rng)
        };
        solve_from(problem, index, &start)
    };
    let candidates = map_indexed(problem.solver.exec, total, run).into_iter().flatten().collect();
    Ok(Resolved::Search(DesignSearch { gamma_bar: problem.gamma_bar, candidates }))
}

/// Runs every start of the design search and reports each outcome. Targets
/// outside the open interval `(γ*, γ₀)` have no search and yield an empty list.
pub fn design_search(problem: &DesignProblem) -> Result<DesignSearch> {
    match resolve(problem)? {
        Resolved::Point(_) => Ok(DesignSearch { gamma_bar: problem.gamma_bar, candidates: Vec::new() }),
        Resolved::Search(s) => Ok(s),
    }
}

/// Minimum-attack-impact gains for the performance level `γ̄`.
///
/// Above `γ₀` the zero gains are returned. Within [`GAMMA_STAR_SLACK`] of
/// `γ*` the minimum-gain pair is returned. In between, every start solves the
/// stationarity system by damped Newton with an augmented-Lagrangian BFGS
/// fallback. Among the starts whose projected Hessian is positive
/// semidefinite, the smallest attack objective wins.
pub fn design_gains(problem: &DesignProblem) -> Result<TradeoffPoint> {
    let search = match resolve(problem)? {
        Resolved::Point(p) => return Ok(p),
        Resolved::Search(s) => s,
    };
    let total = search.candidates.len();
    let Some(best) = search.best_minimum() else {
        let detail = match search.best_candidate() {
            Some(c) => format!(
                "no constrained minimum among {total} starts ({} saddles); best residual {:.3e} ({:?}) with attack objective {:.6}",
                search.count(CandidateStatus::Saddle),
                c.residual,
                c.status,
                c.attack_objective
            ),
            None => format!("every one of {total} starts left the stable region"),
        };
        return Err(Error::NotConverged { what: format!("design at gamma_bar = {}", problem.gamma_bar), detail });
    };
    let mut point = finish(problem, best.gains.clone(), PointKind::Stationary)?;
    point.lambda = Some(best.lambda);
    point.residual_norm = best.residual;
    point.projected_hessian_min = best.projected_hessian_min;
    point.converged_starts = search.count(CandidateStatus::Minimum);
    point.total_starts = total;
    Ok(point)
}

/// Sweep grid on `[lo, hi]`: geometric spacing over the first quarter of the
/// interval and uniform spacing after it.
pub fn sweep_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 || hi <= lo {
        return vec![lo];
    }
    let split = lo + 0.25 * (hi - lo);
    let n_geo = steps / 2;
    let n_lin = steps - n_geo;
    let mut out: Vec<f64> = (0..n_geo).map(|i| lo * (split / lo).powf(i as f64 / n_geo as f64)).collect();
    out.extend((0..n_lin).map(|i| split + (hi - split) * i as f64 / (n_lin - 1).max(1) as f64));
    if n_lin == 1 {
        *out.last_mut().expect("nonempty") = hi;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub gamma_bar: f64,
    pub point: Option<TradeoffPoint>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub steps: usize,
    /// Seed each point with its lower neighbor's solution.
    pub warm_start: bool,
}

/// Designs along the grid from `gamma_lo` upwards; per-point failures are
/// recorded and the sweep continues.
pub fn tradeoff_sweep(
    model: &PlantModel,
    detector: &DetectorConfig,
    truncation: &NoiseTruncation,
    solver: &SolverConfig,
    options: &SweepOptions,
) -> Result<Vec<SweepEntry>> {
    let bounds = gamma_bounds(model, solver)?;
    let mut previous: Option<GainPair> = None;
    let mut out = Vec::with_capacity(options.steps);
    for gamma_bar in sweep_grid(options.gamma_lo, options.gamma_hi, options.steps) {
        let mut problem = DesignProblem::new(model.clone(), detector.clone(), truncation.clone(), gamma_bar, *solver);
        problem.bounds = Some(bounds.clone());
        if options.warm_start {
            problem.warm_start = previous.clone();
        }
        match design_gains(&problem) {
            Ok(point) => {
                previous = Some(point.gains.clone());
                out.push(SweepEntry { gamma_bar, point: Some(point), error: None });
            }
            Err(e) => {
                log::warn!("sweep point gamma_bar = {gamma_bar}: {e}");
                out.push(SweepEntry { gamma_bar, point: None, error: Some(e.to_string()) });
            }
        }
    }
    Ok(out)
}

/// Gain choices that cancel the attack entirely.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialSolutionReport {
    /// Always available: `L = 0` or `K = 0`.
    pub generic: String,
    pub g_rank: usize,
    /// `G` has full column rank, so `GK = 0` forces `K = 0`.
    pub gk_zero_forces_k_zero: bool,
    /// `G = 0`: every `K` leaves the attack without effect.
    pub every_k_trivial: bool,
    /// Dimension of the largest `F`-invariant subspace annihilated by some
    /// nonzero `GK`, namely the generalized null space of `F`.
    pub shared_null_dimension: usize,
    /// A nonzero pair with `G K F^{i−1} L = 0` for `i = 1..n`, if one exists.
    pub nonzero_example: Option<GainPair>,
    /// `max_i ‖G K F^{i−1} L‖_F` for the example.
    pub example_residual: Option<f64>,
    pub notes: Vec<String>,
}

pub fn trivial_solution_check(model: &PlantModel) -> TrivialSolutionReport {
    let (n, m, p) = (model.n(), model.m(), model.p());
    let tol = 1e-9;
    let g_rank = rank(&model.g, tol);
    let g_zero = model.g.iter().all(|v| *v == 0.0);
    let mut notes = vec!["L = 0 or K = 0 removes the attack for every model".to_string()];
    if g_rank == m {
        notes.push("G has full column rank: GK = 0 forces K = 0".into());
    } else if g_zero {
        notes.push("G = 0: the attack never reaches the state for any K".into());
    } else {
        notes.push(format!("G has rank {g_rank} < {m}: any K with columns in null(G) gives GK = 0"));
    }

    let f_pow_n = powers(&model.f, n).pop().expect("powers include A^n");
    let shared = null_space(&f_pow_n, tol);
    let shared_dim = shared.ncols();
    let (mut example, mut residual) = (None, None);
    if shared_dim > 0 && shared_dim < n && p > 0 && !g_zero {
        // K annihilates the invariant subspace; L maps into it.
        let projector = DMatrix::identity(n, n) - &shared * shared.transpose();
        let k = DMatrix::from_fn(m, n, |u, v| if u == v % m { 1.0 } else { 0.5 }) * projector;
        let mut l = DMatrix::zeros(n, p);
        l.set_column(0, &shared.column(0));
        let gk = &model.g * &k;
        let res = powers(&model.f, n).iter().take(n).map(|fi| (&gk * fi * &l).norm()).fold(0.0, f64::max);
        if gk.norm() > tol {
            notes.push(format!("F has a {shared_dim}-dimensional generalized null space shared with GK: nonzero L exist"));
            example = Some(GainPair::new(l, k));
            residual = Some(res);
        }
    } else if shared_dim == 0 {
        notes.push("F is nonsingular: no nonzero L with a shared null space".into());
    }
    TrivialSolutionReport {
        generic: "L = 0 or K = 0".into(),
        g_rank,
        gk_zero_forces_k_zero: g_rank == m,
        every_k_trivial: g_zero,
        shared_null_dimension: shared_dim,
        nonzero_example: example,
        example_residual: residual,
        notes,
    }
}
