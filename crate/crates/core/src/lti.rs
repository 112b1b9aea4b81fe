//! Plant, noise, detector and closed-loop bookkeeping.
//!
//! The plant is `x⁺ = F x + G u + ν`, `y = C x + η` with `ν ~ 𝒩(0, R₁)`,
//! `η ~ 𝒩(0, R₂)`, observer gain `L` and estimate feedback `u = K x̂`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::linalg::{self, complex_rank, eigenvalues, min_sym_eigenvalue, spectral_radius, sym_map, sym_sqrt, symmetrize};

/// Covariances with smallest eigenvalue below `-COVARIANCE_REJECT · tr` are rejected.
pub const COVARIANCE_REJECT: f64 = 1e-2;
/// Eigenvalues of accepted covariances are floored at `COVARIANCE_FLOOR · tr`.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
const PBH_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantModel {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
}

impl PlantModel {
    /// Checks dimensional consistency only; see [`validate_model`] for the rest.
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, c: DMatrix<f64>, r1: DMatrix<f64>, r2: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        let shape = |m: &DMatrix<f64>| format!("{}x{}", m.nrows(), m.ncols());
        if f.ncols() != n {
            return Err(Error::dims("F", format!("{n}x{n}"), shape(&f)));
        }
        if g.nrows() != n {
            return Err(Error::dims("G", format!("{n}xm"), shape(&g)));
        }
        if c.ncols() != n {
            return Err(Error::dims("C", format!("px{n}"), shape(&c)));
        }
        let p = c.nrows();
        if r1.shape() != (n, n) {
            return Err(Error::dims("R1", format!("{n}x{n}"), shape(&r1)));
        }
        if r2.shape() != (p, p) {
            return Err(Error::dims("R2", format!("{p}x{p}"), shape(&r2)));
        }
        Ok(Self { f, g, c, r1, r2 })
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Input dimension `m`.
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    /// Output dimension `p`.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// `tr R₁ + tr R₂`, the expected squared norm of the stacked noise.
    pub fn noise_power(&self) -> f64 {
        self.r1.trace() + self.r2.trace()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceAdjustment {
    pub name: String,
    pub min_eigenvalue: f64,
    pub floor: f64,
    pub frobenius_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PbhRank {
    pub eigenvalue: (f64, f64),
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDiagnostics {
    pub stable: bool,
    pub spectral_radius: f64,
    pub detectable: bool,
    pub stabilizable: bool,
    /// Rank of `[λI − F; C]` per eigenvalue of `F`.
    pub observability_ranks: Vec<PbhRank>,
    /// Rank of `[λI − F, G]` per eigenvalue of `F`.
    pub controllability_ranks: Vec<PbhRank>,
    pub adjustments: Vec<CovarianceAdjustment>,
    pub warnings: Vec<String>,
}

impl ModelDiagnostics {
    pub fn passed(&self) -> bool {
        self.stable && self.detectable && self.stabilizable
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.stable {
            out.push(format!("F is not stable (spectral radius {:.6})", self.spectral_radius));
        }
        if !self.detectable {
            out.push("(F, C) is not detectable".to_string());
        }
        if !self.stabilizable {
            out.push("(F, G) is not stabilizable".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedModel {
    /// The model with near-PSD covariances clamped.
    pub model: PlantModel,
    pub diagnostics: ModelDiagnostics,
}

fn clamp_covariance(name: &str, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<CovarianceAdjustment>)> {
    let scale = r.norm().max(f64::MIN_POSITIVE);
    if (r - r.transpose()).norm() > 1e-9 * scale {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let r = symmetrize(r);
    let trace = r.trace();
    if trace <= 0.0 {
        return Err(Error::NotPsd { what: name.into(), min_eigenvalue: min_sym_eigenvalue(&r), trace });
    }
    let min_eig = min_sym_eigenvalue(&r);
    if min_eig < -COVARIANCE_REJECT * trace {
        return Err(Error::NotPsd { what: name.into(), min_eigenvalue: min_eig, trace });
    }
    let floor = COVARIANCE_FLOOR * trace;
    if min_eig >= floor {
        return Ok((r, None));
    }
    let clamped = sym_map(&r, |x| x.max(floor));
    let adj = CovarianceAdjustment {
        name: name.into(),
        min_eigenvalue: min_eig,
        floor,
        frobenius_change: (&clamped - &r).norm(),
    };
    Ok((clamped, Some(adj)))
}

fn pbh_ranks(f: &DMatrix<f64>, extra: &DMatrix<f64>, stacked_rows: bool) -> Vec<PbhRank> {
    let n = f.nrows();
    let fc = f.map(|x| Complex64::new(x, 0.0));
    let ec = extra.map(|x| Complex64::new(x, 0.0));
    eigenvalues(f)
        .into_iter()
        .map(|lam| {
            let shifted = DMatrix::from_diagonal_element(n, n, lam) - &fc;
            let m = if stacked_rows {
                let mut m = DMatrix::zeros(n + ec.nrows(), n);
                m.view_mut((0, 0), (n, n)).copy_from(&shifted);
                m.view_mut((n, 0), (ec.nrows(), n)).copy_from(&ec);
                m
            } else {
                let mut m = DMatrix::zeros(n, n + ec.ncols());
                m.view_mut((0, 0), (n, n)).copy_from(&shifted);
                m.view_mut((0, n), (n, ec.ncols())).copy_from(&ec);
                m
            };
            PbhRank { eigenvalue: (lam.re, lam.im), rank: complex_rank(&m, PBH_RANK_TOL) }
        })
        .collect()
}

/// Validates stability, detectability and stabilizability (PBH tests) and
/// clamps near-PSD noise covariances. Dimension problems and clearly
/// indefinite covariances are errors; the remaining failures are reported.
pub fn validate_model(model: &PlantModel) -> Result<ValidatedModel> {
    let model = PlantModel::new(model.f.clone(), model.g.clone(), model.c.clone(), model.r1.clone(), model.r2.clone())?;
    let n = model.n();
    let (r1, adj1) = clamp_covariance("R1", &model.r1)?;
    let (r2, adj2) = clamp_covariance("R2", &model.r2)?;
    let mut warnings = Vec::new();
    let adjustments: Vec<_> = [adj1, adj2].into_iter().flatten().collect();
    for a in &adjustments {
        let msg = format!(
            "{} has smallest eigenvalue {:.3e}; eigenvalues floored at {:.3e} (Frobenius change {:.3e})",
            a.name, a.min_eigenvalue, a.floor, a.frobenius_change
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let rho = spectral_radius(&model.f);
    let obs = pbh_ranks(&model.f, &model.c, true);
    let ctrl = pbh_ranks(&model.f, &model.g, false);
    let unstable = |r: &PbhRank| (r.eigenvalue.0.powi(2) + r.eigenvalue.1.powi(2)).sqrt() >= 1.0;
    let detectable = obs.iter().filter(|r| unstable(r)).all(|r| r.rank == n);
    let stabilizable = ctrl.iter().filter(|r| unstable(r)).all(|r| r.rank == n);

    Ok(ValidatedModel {
        model: PlantModel { r1, r2, ..model },
        diagnostics: ModelDiagnostics {
            stable: rho < 1.0,
            spectral_radius: rho,
            detectable,
            stabilizable,
            observability_ranks: obs,
            controllability_ranks: ctrl,
            adjustments,
            warnings,
        },
    })
}

/// Observer gain `L` (n×p) and controller gain `K` (m×n).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainPair {
    pub l: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainStability {
    /// `ρ(F − LC)`.
    pub observer_radius: f64,
    /// `ρ(F + GK)`.
    pub controller_radius: f64,
}

impl GainStability {
    pub fn is_stable(&self) -> bool {
        self.observer_radius < 1.0 && self.controller_radius < 1.0
    }
}

impl GainPair {
    pub fn new(l: DMatrix<f64>, k: DMatrix<f64>) -> Self {
        Self { l, k }
    }

    pub fn zero(model: &PlantModel) -> Self {
        Self { l: DMatrix::zeros(model.n(), model.p()), k: DMatrix::zeros(model.m(), model.n()) }
    }

    pub fn check_dims(&self, model: &PlantModel) -> Result<()> {
        let (n, m, p) = (model.n(), model.m(), model.p());
        if self.l.shape() != (n, p) {
            return Err(Error::dims("L", format!("{n}x{p}"), format!("{}x{}", self.l.nrows(), self.l.ncols())));
        }
        if self.k.shape() != (m, n) {
            return Err(Error::dims("K", format!("{m}x{n}"), format!("{}x{}", self.k.nrows(), self.k.ncols())));
        }
        Ok(())
    }

    pub fn observer_matrix(&self, model: &PlantModel) -> DMatrix<f64> {
        &model.f - &self.l * &model.c
    }

    pub fn controller_matrix(&self, model: &PlantModel) -> DMatrix<f64> {
        &model.f + &model.g * &self.k
    }

    pub fn stability(&self, model: &PlantModel) -> Result<GainStability> {
        self.check_dims(model)?;
        Ok(GainStability {
            observer_radius: spectral_radius(&self.observer_matrix(model)),
            controller_radius: spectral_radius(&self.controller_matrix(model)),
        })
    }

    pub fn require_stable(&self, model: &PlantModel) -> Result<GainStability> {
        let s = self.stability(model)?;
        if s.observer_radius >= 1.0 {
            return Err(Error::Unstable { what: "observer F - LC".into(), radius: s.observer_radius });
        }
        if s.controller_radius >= 1.0 {
            return Err(Error::Unstable { what: "controller F + GK".into(), radius: s.controller_radius });
        }
        Ok(s)
    }

    /// Gains stacked as `[vec_row(L); vec_row(K)]`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.l.len() + self.k.len());
        for i in 0..self.l.nrows() {
            for j in 0..self.l.ncols() {
                v.push(self.l[(i, j)]);
            }
        }
        for u in 0..self.k.nrows() {
            for w in 0..self.k.ncols() {
                v.push(self.k[(u, w)]);
            }
        }
        v
    }

    pub fn from_vector(model: &PlantModel, v: &[f64]) -> Result<Self> {
        let (n, m, p) = (model.n(), model.m(), model.p());
        if v.len() != n * p + m * n {
            return Err(Error::dims("gain vector", n * p + m * n, v.len()));
        }
        Ok(Self {
            l: DMatrix::from_row_slice(n, p, &v[..n * p]),
            k: DMatrix::from_row_slice(m, n, &v[n * p..]),
        })
    }
}

/// `Pr(χ²_dof ≤ x)`.
pub fn chi2_cdf(dof: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(dof as f64 / 2.0, x / 2.0)
}

/// Inverse of [`chi2_cdf`]: the threshold `m̄` with `Pr(χ²_dof ≤ m̄) = prob`.
pub fn chi2_quantile(dof: u32, prob: f64) -> Result<f64> {
    if dof == 0 {
        return Err(Error::InvalidArgument("chi-squared degrees of freedom must be positive".into()));
    }
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::InvalidArgument(format!("chi-squared probability must lie in [0, 1), got {prob}")));
    }
    if prob == 0.0 {
        return Ok(0.0);
    }
    let k = dof as f64;
    let half = k / 2.0;
    let log_norm = ln_gamma(half) + half * std::f64::consts::LN_2;
    let pdf = |x: f64| ((half - 1.0) * x.ln() - x / 2.0 - log_norm).exp();

    // Bracket the root, then safeguarded Newton.
    let mut lo = 0.0;
    let mut hi = k.max(1.0);
    while chi2_cdf(dof, hi) < prob {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NotConverged { what: "chi-squared quantile".into(), detail: "bracket overflow".into() });
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(dof, x) - prob;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Chi-squared detector: alarm when `z = rᵀΣ⁻¹r > alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub false_alarm_rate: f64,
    pub alpha: f64,
    pub p: usize,
}

impl DetectorConfig {
    /// Threshold from the false-alarm rate: `alpha = χ²_p⁻¹(1 − rate)`.
    pub fn from_false_alarm_rate(false_alarm_rate: f64, p: usize) -> Result<Self> {
        if !(false_alarm_rate > 0.0 && false_alarm_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!("false alarm rate must lie in (0, 1], got {false_alarm_rate}")));
        }
        let alpha = chi2_quantile(p as u32, 1.0 - false_alarm_rate)?;
        if alpha <= 0.0 {
            return Err(Error::InvalidArgument("detector threshold must be positive".into()));
        }
        Ok(Self { false_alarm_rate, alpha, p })
    }

    /// Explicit threshold, e.g. for sensitivity studies; the false-alarm rate
    /// is back-computed from it.
    pub fn with_threshold(alpha: f64, p: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("detector threshold must be positive, got {alpha}")));
        }
        Ok(Self { false_alarm_rate: 1.0 - chi2_cdf(p as u32, alpha), alpha, p })
    }
}

/// Ellipsoidal truncation of the Gaussian noises at probability `p_bar`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseTruncation {
    pub p_bar: f64,
    /// Mahalanobis bound for the process noise (`n` degrees of freedom).
    pub nu_bar: f64,
    /// Mahalanobis bound for the sensor noise (`p` degrees of freedom). The
    /// zero-alarm attack cancels the sensor noise, so nothing downstream uses it.
    pub eta_bar: f64,
}

impl NoiseTruncation {
    pub fn new(p_bar: f64, n: usize, p: usize) -> Result<Self> {
        Ok(Self { p_bar, nu_bar: chi2_quantile(n as u32, p_bar)?, eta_bar: chi2_quantile(p as u32, p_bar)? })
    }
}

/// How steady-state covariances are evaluated: the exact Stein solution or
/// the truncated series `Σ_{q=0}^{k} A^q R A^qᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovarianceMode {
    Exact,
    Truncated(usize),
}

impl CovarianceMode {
    pub fn stein(self, a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            CovarianceMode::Exact => linalg::solve_stein(a, q),
            CovarianceMode::Truncated(k) => Ok(linalg::truncated_stein(a, q, k)),
        }
    }
}

fn observer_noise(model: &PlantModel, l: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(l * &model.r2 * l.transpose() + &model.r1))
}

/// `P_e = (F − LC) P_e (F − LC)ᵀ + L R₂ Lᵀ + R₁`.
pub fn estimation_error_covariance(model: &PlantModel, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    estimation_error_covariance_with(model, l, CovarianceMode::Exact)
}

pub fn estimation_error_covariance_with(model: &PlantModel, l: &DMatrix<f64>, mode: CovarianceMode) -> Result<DMatrix<f64>> {
    if l.shape() != (model.n(), model.p()) {
        return Err(Error::dims("L", format!("{}x{}", model.n(), model.p()), format!("{}x{}", l.nrows(), l.ncols())));
    }
    let fo = &model.f - l * &model.c;
    let rho = spectral_radius(&fo);
    if rho >= 1.0 {
        return Err(Error::Unstable { what: "observer F - LC".into(), radius: rho });
    }
    mode.stein(&fo, &observer_noise(model, l))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualCovariance {
    pub p_e: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_sqrt: DMatrix<f64>,
}

fn residual_from_pe(model: &PlantModel, p_e: DMatrix<f64>) -> Result<ResidualCovariance> {
    let sigma = symmetrize(&(&model.c * &p_e * model.c.transpose() + &model.r2));
    let min = min_sym_eigenvalue(&sigma);
    if min <= 0.0 {
        return Err(Error::NotPsd { what: "residual covariance Sigma".into(), min_eigenvalue: min, trace: sigma.trace() });
    }
    let sigma_sqrt = sym_sqrt(&sigma);
    Ok(ResidualCovariance { p_e, sigma, sigma_sqrt })
}

/// `Σ = C P_e Cᵀ + R₂` and its symmetric square root.
pub fn residual_covariance(model: &PlantModel, l: &DMatrix<f64>) -> Result<ResidualCovariance> {
    residual_from_pe(model, estimation_error_covariance(model, l)?)
}

pub fn residual_covariance_with(model: &PlantModel, l: &DMatrix<f64>, mode: CovarianceMode) -> Result<ResidualCovariance> {
    residual_from_pe(model, estimation_error_covariance_with(model, l, mode)?)
}

/// Stacked closed loop in `ξ = [x; e]` without attack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopRealization {
    /// `[F+GK, −GK; 0, F−LC]`.
    pub a: DMatrix<f64>,
    /// `[I, 0; I, −L]`.
    pub b: DMatrix<f64>,
    /// `B diag(R₁, R₂) Bᵀ = [R₁, R₁; R₁, R₁ + L R₂ Lᵀ]`.
    pub r: DMatrix<f64>,
    pub p_e: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_sqrt: DMatrix<f64>,
}

/// Block matrices `A`, `B`, `R` of the stacked dynamics without any
/// stability check.
pub(crate) fn stacked_matrices(model: &PlantModel, gains: &GainPair) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = model.n();
    let p = model.p();
    let gk = &model.g * &gains.k;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(&model.f + &gk));
    a.view_mut((0, n), (n, n)).copy_from(&(-&gk));
    a.view_mut((n, n), (n, n)).copy_from(&(&model.f - &gains.l * &model.c));
    let mut b = DMatrix::zeros(2 * n, n + p);
    b.view_mut((0, 0), (n, n)).fill_with_identity();
    b.view_mut((n, 0), (n, n)).fill_with_identity();
    b.view_mut((n, n), (n, p)).copy_from(&(-&gains.l));
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    r.view_mut((0, 0), (n, n)).copy_from(&model.r1);
    r.view_mut((0, n), (n, n)).copy_from(&model.r1);
    r.view_mut((n, 0), (n, n)).copy_from(&model.r1);
    r.view_mut((n, n), (n, n)).copy_from(&observer_noise(model, &gains.l));
    (a, b, symmetrize(&r))
}

pub fn assemble_closed_loop(model: &PlantModel, gains: &GainPair) -> Result<ClosedLoopRealization> {
    gains.require_stable(model)?;
    let (a, b, r) = stacked_matrices(model, gains);
    let rc = residual_covariance(model, &gains.l)?;
    Ok(ClosedLoopRealization { a, b, r, p_e: rc.p_e, sigma: rc.sigma, sigma_sqrt: rc.sigma_sqrt })
}
