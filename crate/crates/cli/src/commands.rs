//! Command dispatch. Each command returns a JSON payload and, for tabular
//! commands, a CSV table.

use nalgebra::{DMatrix, DVector};
use reachsec::codesign::{
    design_gains, gamma_bounds, trivial_solution_check, tradeoff_sweep, DesignProblem, GammaBounds, SweepEntry,
    SweepOptions, TradeoffPoint,
};
use reachsec::ellipsoid::{self, sphere_directions, SupportDirection};
use reachsec::lti::{residual_covariance, validate_model, DetectorConfig, GainPair, NoiseTruncation, PlantModel};
use reachsec::performance::{occ_gain, SolverConfig};
use reachsec::reachability::{
    exact_reachable_boundary, settling_horizon, shape_term_sequences, simulate_attacked_trajectories,
    ReachabilitySummary, SimulationConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{rows, HorizonPolicy, RunConfig};
use crate::output::{csv_table, fmt_num, ResultEnvelope};
use crate::CliError;

/// Horizon used to seed the minimum-gain search when the horizon policy is a
/// tolerance.
const SEED_HORIZON: usize = 35;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    GammaBounds,
    Design { gamma_bar: f64 },
    Sweep { from: f64, to: f64, steps: usize, cold: bool },
    Boundary { k: Option<usize>, directions: usize },
    Simulate { trials: usize, k: Option<usize>, seed: Option<u64> },
    CheckTrivial,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::GammaBounds => "gamma-bounds",
            Command::Design { .. } => "design",
            Command::Sweep { .. } => "sweep",
            Command::Boundary { .. } => "boundary",
            Command::Simulate { .. } => "simulate",
            Command::CheckTrivial => "check-trivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub envelope: ResultEnvelope,
    pub csv: Option<String>,
}

struct Context {
    model: PlantModel,
    detector: DetectorConfig,
    truncation: NoiseTruncation,
    warnings: Vec<String>,
}

fn prepare(config: &RunConfig) -> Result<Context, CliError> {
    let validated = validate_model(&config.plant()?)?;
    let failures = validated.diagnostics.failures();
    if !failures.is_empty() {
        return Err(CliError::Usage(format!("model rejected: {}", failures.join("; "))));
    }
    let warnings = validated.diagnostics.warnings.clone();
    let model = validated.model;
    let detector = DetectorConfig::from_false_alarm_rate(config.detector.false_alarm_rate, model.p())?;
    let truncation = NoiseTruncation::new(config.truncation.p_bar, model.n(), model.p())?;
    Ok(Context { model, detector, truncation, warnings })
}

fn mat(m: &DMatrix<f64>) -> Value {
    json!(rows(m))
}

fn gains_json(g: &GainPair) -> Value {
    json!({ "L": mat(&g.l), "K": mat(&g.k) })
}

fn required_gains(config: &RunConfig, command: &str) -> Result<GainPair, CliError> {
    config.gain_pair()?.ok_or_else(|| CliError::Usage(format!("{command} needs a [gains] table with L and K")))
}

/// Horizon for analyses at fixed gains.
fn horizon_at(config: &RunConfig, ctx: &Context, gains: &GainPair) -> Result<usize, CliError> {
    match config.horizon {
        HorizonPolicy::K(k) => Ok(k),
        HorizonPolicy::Eps(eps) => Ok(settling_horizon(&ctx.model, gains, &ctx.detector, &ctx.truncation, eps)?),
    }
}

/// Solver settings and bounds for the gain searches. With a tolerance
/// policy the horizon is the settling horizon at the minimum-gain pair.
fn search_setup(config: &RunConfig, ctx: &Context) -> Result<(SolverConfig, GammaBounds), CliError> {
    match config.horizon {
        HorizonPolicy::K(k) => {
            let solver = config.solver.to_solver(k);
            let bounds = gamma_bounds(&ctx.model, &solver)?;
            Ok((solver, bounds))
        }
        HorizonPolicy::Eps(eps) => {
            let seed = config.solver.to_solver(SEED_HORIZON);
            let first = gamma_bounds(&ctx.model, &seed)?;
            let k = settling_horizon(&ctx.model, &first.min_gain.gains, &ctx.detector, &ctx.truncation, eps)?;
            let solver = config.solver.to_solver(k);
            let bounds = if k == SEED_HORIZON { first } else { gamma_bounds(&ctx.model, &solver)? };
            Ok((solver, bounds))
        }
    }
}

fn point_json(p: &TradeoffPoint) -> Value {
    json!({
        "gamma_bar": p.gamma_bar,
        "kind": p.kind,
        "gamma": p.gamma,
        "sqrt_trace_qstar": p.sqrt_trace_qstar,
        "attack_objective": p.attack_objective,
        "lambda": p.lambda,
        "residual": p.residual_norm,
        "projected_hessian_min": p.projected_hessian_min,
        "converged_starts": p.converged_starts,
        "total_starts": p.total_starts,
        "gains": gains_json(&p.gains),
    })
}

fn analyze(config: &RunConfig, ctx: &Context) -> Result<(Value, Value), CliError> {
    let gains = required_gains(config, "analyze")?;
    let stability = gains.require_stable(&ctx.model)?;
    let k = horizon_at(config, ctx, &gains)?;
    let occ = occ_gain(&ctx.model, &gains)?;
    let rc = residual_covariance(&ctx.model, &gains.l)?;
    let summary = ReachabilitySummary::compute(&ctx.model, &gains, &ctx.detector, &ctx.truncation, k)?;
    let result = json!({
        "gains": gains_json(&gains),
        "observer_radius": stability.observer_radius,
        "controller_radius": stability.controller_radius,
        "gamma": occ.gamma,
        "p_e": mat(&rc.p_e),
        "sigma": mat(&rc.sigma),
        "k_star": k,
        "sqrt_trace_qstar": summary.sqrt_trace_total,
        "attack_objective": summary.attack_objective,
        "noise_only_sqrt_trace": summary.noise_only_sqrt_trace,
        "q_star": mat(summary.q_star.shape()),
    });
    Ok((result, json!({ "k_star": k })))
}

fn bounds_json(b: &GammaBounds) -> Value {
    let r = &b.min_gain;
    json!({
        "gamma_open": b.gamma_open,
        "gamma_star": r.gamma_star,
        "gains": gains_json(&r.gains),
        "gradient_residual": r.gradient_residual,
        "hessian_min_eigenvalue": r.hessian_min_eigenvalue,
        "attack_objective": r.attack_objective,
        "converged_starts": r.converged_starts,
        "total_starts": r.total_starts,
    })
}

fn sweep_csv(model: &PlantModel, entries: &[SweepEntry]) -> Result<String, CliError> {
    let mut header: Vec<String> =
        ["gamma_bar", "status", "sqrt_trace_qstar", "attack_objective", "lambda", "residual", "gamma"].map(String::from).to_vec();
    for i in 0..model.n() {
        for j in 0..model.p() {
            header.push(format!("L_{i}_{j}"));
        }
    }
    for u in 0..model.m() {
        for v in 0..model.n() {
            header.push(format!("K_{u}_{v}"));
        }
    }
    header.push("error".into());
    let width = header.len();
    let rows: Vec<Vec<Option<String>>> = entries
        .iter()
        .map(|e| {
            let mut row = vec![Some(fmt_num(e.gamma_bar))];
            match &e.point {
                Some(p) => {
                    row.push(serde_json::to_value(p.kind).ok().and_then(|v| v.as_str().map(String::from)));
                    row.push(Some(fmt_num(p.sqrt_trace_qstar)));
                    row.push(Some(fmt_num(p.attack_objective)));
                    row.push(p.lambda.map(fmt_num));
                    row.push(Some(fmt_num(p.residual_norm)));
                    row.push(Some(fmt_num(p.gamma)));
                    row.extend(p.gains.to_vector().into_iter().map(|v| Some(fmt_num(v))));
                    row.push(None);
                }
                None => {
                    row.push(Some("failed".into()));
                    row.resize(width - 1, None);
                    row.push(e.error.clone());
                }
            }
            row
        })
        .collect();
    csv_table(&header, &rows)
}

fn boundary(config: &RunConfig, ctx: &Context, k: Option<usize>, count: usize) -> Result<(Value, Value, String), CliError> {
    if count == 0 {
        return Err(CliError::Usage("boundary needs at least one direction".into()));
    }
    let gains = required_gains(config, "boundary")?;
    gains.require_stable(&ctx.model)?;
    let k = match k {
        Some(k) => k,
        None => horizon_at(config, ctx, &gains)?,
    };
    let n = ctx.model.n();
    let terms = shape_term_sequences(&ctx.model, &gains, &ctx.detector, &ctx.truncation, k)?;
    let summary = ReachabilitySummary::from_terms(&terms)?;
    let directions: Vec<SupportDirection> = sphere_directions(n, count, config.solver.seed)?;
    let points = exact_reachable_boundary(&terms, &directions)?;
    let shapes = terms.merged(k);
    let membership = summary.q_star.membership();
    let (mut max_support_gap, mut max_qf): (f64, f64) = (0.0, 0.0);
    for (d, x) in directions.iter().zip(&points) {
        let support = ellipsoid::sum_support(&shapes, d);
        max_support_gap = max_support_gap.max((d.as_vector().dot(x) - support).abs() / support.abs().max(1e-300));
        max_qf = max_qf.max(membership.quadratic_form(x));
    }
    let mut header: Vec<String> =
        if n == 2 { vec!["ell_angle".into()] } else { (0..n).map(|i| format!("ell_{i}")).collect() };
    header.extend((0..n).map(|i| format!("x_{i}")));
    let rows: Vec<Vec<Option<String>>> = directions
        .iter()
        .zip(&points)
        .map(|(d, x): (&SupportDirection, &DVector<f64>)| {
            let v = d.as_vector();
            let mut row: Vec<Option<String>> = if n == 2 {
                let a = v[1].atan2(v[0]);
                vec![Some(fmt_num(if a < 0.0 { a + std::f64::consts::TAU } else { a }))]
            } else {
                v.iter().map(|c| Some(fmt_num(*c))).collect()
            };
            row.extend(x.iter().map(|c| Some(fmt_num(*c))));
            row
        })
        .collect();
    let csv = csv_table(&header, &rows)?;
    let result = json!({
        "gains": gains_json(&gains),
        "k": k,
        "directions": count,
        "q_star": { "center": summary.q_star.center().iter().copied().collect::<Vec<f64>>(), "shape": mat(summary.q_star.shape()) },
        "sqrt_trace_qstar": summary.sqrt_trace_total,
        "members": shapes.len(),
        "max_relative_support_gap": max_support_gap,
        "max_bound_quadratic_form": max_qf,
    });
    Ok((result, json!({ "k_star": k }), csv))
}

/// Runs `command` on `config`.
pub fn dispatch(command: &Command, config: &RunConfig) -> Result<Output, CliError> {
    let name = command.name();
    let ctx = prepare(config).map_err(|e| e.context(name))?;
    let mut csv = None;
    let base = json!({
        "alpha": ctx.detector.alpha,
        "false_alarm_rate": ctx.detector.false_alarm_rate,
        "nu_bar": ctx.truncation.nu_bar,
        "eta_bar": ctx.truncation.eta_bar,
        "noise_power": ctx.model.noise_power(),
    });
    let mut run = || -> Result<(Value, Value), CliError> {
        match command {
            Command::Analyze => analyze(config, &ctx),
            Command::GammaBounds => {
                let (solver, bounds) = search_setup(config, &ctx)?;
                Ok((bounds_json(&bounds), json!({ "k_star": solver.horizon })))
            }
            Command::Design { gamma_bar } => {
                let (solver, bounds) = search_setup(config, &ctx)?;
                let mut problem = DesignProblem::new(ctx.model.clone(), ctx.detector.clone(), ctx.truncation.clone(), *gamma_bar, solver);
                problem.bounds = Some(bounds.clone());
                let point = design_gains(&problem)?;
                Ok((
                    json!({ "point": point_json(&point), "gamma_open": bounds.gamma_open, "gamma_star": bounds.gamma_star() }),
                    json!({ "k_star": solver.horizon }),
                ))
            }
            Command::Sweep { from, to, steps, cold } => {
                if *steps == 0 || !(from.is_finite() && to.is_finite() && from <= to) {
                    return Err(CliError::Usage(format!("sweep needs steps >= 1 and from <= to, got {from}..{to} in {steps}")));
                }
                let (solver, bounds) = search_setup(config, &ctx)?;
                let opts = SweepOptions { gamma_lo: *from, gamma_hi: *to, steps: *steps, warm_start: !cold };
                let entries = tradeoff_sweep(&ctx.model, &ctx.detector, &ctx.truncation, &solver, &opts)?;
                csv = Some(sweep_csv(&ctx.model, &entries)?);
                let points: Vec<Value> = entries
                    .iter()
                    .map(|e| match &e.point {
                        Some(p) => point_json(p),
                        None => json!({ "gamma_bar": e.gamma_bar, "error": e.error }),
                    })
                    .collect();
                let failed = entries.iter().filter(|e| e.point.is_none()).count();
                Ok((
                    json!({ "gamma_open": bounds.gamma_open, "gamma_star": bounds.gamma_star(), "failed_points": failed, "points": points }),
                    json!({ "k_star": solver.horizon }),
                ))
            }
            Command::Boundary { k, directions } => {
                let (result, derived, table) = boundary(config, &ctx, *k, *directions)?;
                csv = Some(table);
                Ok((result, derived))
            }
            Command::Simulate { trials, k, seed } => {
                let gains = required_gains(config, "simulate")?;
                gains.require_stable(&ctx.model)?;
                let k = match k {
                    Some(k) => *k,
                    None => horizon_at(config, &ctx, &gains)?,
                };
                let sim = SimulationConfig {
                    trials: *trials,
                    k,
                    seed: seed.unwrap_or(config.solver.seed),
                    keep_samples: false,
                    exec: config.solver.exec,
                };
                let r = simulate_attacked_trajectories(&ctx.model, &gains, &ctx.detector, &ctx.truncation, &sim)?;
                let by_strategy: Vec<Value> = r
                    .max_quadratic_form_by_strategy
                    .iter()
                    .map(|(s, q)| json!({ "strategy": s, "max_quadratic_form": q }))
                    .collect();
                Ok((
                    json!({
                        "gains": gains_json(&gains),
                        "trials": r.trials,
                        "k": r.k,
                        "seed": sim.seed,
                        "contained": r.contained,
                        "containment": r.fraction,
                        "max_quadratic_form": r.max_quadratic_form,
                        "worst_trial": r.worst_trial,
                        "by_strategy": by_strategy,
                        "sqrt_trace_qstar": r.sqrt_trace_bound,
                    }),
                    json!({ "k_star": k }),
                ))
            }
            Command::CheckTrivial => {
                let r = trivial_solution_check(&ctx.model);
                Ok((
                    json!({
                        "generic": r.generic,
                        "g_rank": r.g_rank,
                        "gk_zero_forces_k_zero": r.gk_zero_forces_k_zero,
                        "every_k_trivial": r.every_k_trivial,
                        "shared_null_dimension": r.shared_null_dimension,
                        "nonzero_example": r.nonzero_example.as_ref().map(gains_json),
                        "example_residual": r.example_residual,
                        "notes": r.notes,
                    }),
                    json!({}),
                ))
            }
        }
    };
    let (result, extra) = run().map_err(|e| e.context(name))?;
    let mut derived = base;
    if let (Value::Object(d), Value::Object(x)) = (&mut derived, extra) {
        d.extend(x);
    }
    let envelope = ResultEnvelope {
        tool: "reachsec".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        options: serde_json::to_value(command).unwrap_or(Value::Null),
        config: config.clone(),
        derived,
        warnings: ctx.warnings.clone(),
        result,
    };
    Ok(Output { envelope, csv })
}
