//! TOML run configuration.
//!
//! Matrices are nested row arrays checked against the declared `n`, `m`, `p`.
//! Unknown keys are rejected everywhere and every default is written back
//! when the resolved configuration is echoed.

use std::path::Path;

use nalgebra::DMatrix;
use reachsec::lti::{GainPair, PlantModel};
use reachsec::performance::{PartialsMode, SolverConfig};
use reachsec::reachability::DEFAULT_HORIZON_EPS;
use reachsec::Execution;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "G")]
    pub g: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "R1")]
    pub r1: Rows,
    #[serde(rename = "R2")]
    pub r2: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub false_alarm_rate: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { false_alarm_rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationSpec {
    pub p_bar: f64,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { p_bar: 0.95 }
    }
}

/// Fixed horizon `k`, or the settling horizon for tolerance `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum HorizonPolicy {
    K(usize),
    Eps(f64),
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        HorizonPolicy::K(35)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub starts: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub hessian_step: f64,
    pub hessian_tolerance: f64,
    pub partials: PartialsMode,
    pub exec: Execution,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            starts: s.starts,
            seed: s.seed,
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            hessian_step: s.hessian_step,
            hessian_tolerance: s.hessian_tolerance,
            partials: s.partials,
            exec: s.exec,
        }
    }
}

impl SolverSpec {
    pub fn to_solver(&self, horizon: usize) -> SolverConfig {
        SolverConfig {
            starts: self.starts,
            seed: self.seed,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            horizon,
            hessian_step: self.hessian_step,
            hessian_tolerance: self.hessian_tolerance,
            partials: self.partials,
            exec: self.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(rename = "L")]
    pub l: Rows,
    #[serde(rename = "K")]
    pub k: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub horizon: HorizonPolicy,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainSpec>,
}

fn matrix(field: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<DMatrix<f64>, CliError> {
    let found_cols = rows.first().map_or(0, Vec::len);
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let shape = if rows.iter().all(|r| r.len() == found_cols) {
            format!("{}x{}", rows.len(), found_cols)
        } else {
            format!("{} ragged rows", rows.len())
        };
        return Err(CliError::Usage(format!("{field}: expected a {nrows}x{ncols} matrix, found {shape}")));
    }
    if let Some(v) = rows.iter().flatten().find(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("{field}: entry {v} is not finite")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config parse error: {e}")))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), CliError> {
        self.plant()?;
        self.gain_pair()?;
        match self.horizon {
            HorizonPolicy::K(0) => return Err(CliError::Usage("horizon.k: must be at least 1".into())),
            HorizonPolicy::Eps(e) if !(e > 0.0 && e < 1.0) => {
                return Err(CliError::Usage(format!("horizon.eps: must lie in (0, 1), got {e}")));
            }
            _ => {}
        }
        let rate = self.detector.false_alarm_rate;
        if !(rate > 0.0 && rate < 1.0) {
            return Err(CliError::Usage(format!("detector.false_alarm_rate: must lie in (0, 1), got {rate}")));
        }
        let p_bar = self.truncation.p_bar;
        if !(p_bar > 0.0 && p_bar < 1.0) {
            return Err(CliError::Usage(format!("truncation.p_bar: must lie in (0, 1), got {p_bar}")));
        }
        if !(self.solver.tolerance > 0.0) {
            return Err(CliError::Usage("solver.tolerance: must be positive".into()));
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantModel, CliError> {
        let s = &self.model;
        if s.n == 0 || s.m == 0 || s.p == 0 {
            return Err(CliError::Usage("model: n, m and p must be positive".into()));
        }
        PlantModel::new(
            matrix("model.F", &s.f, s.n, s.n)?,
            matrix("model.G", &s.g, s.n, s.m)?,
            matrix("model.C", &s.c, s.p, s.n)?,
            matrix("model.R1", &s.r1, s.n, s.n)?,
            matrix("model.R2", &s.r2, s.p, s.p)?,
        )
        .map_err(CliError::from)
    }

    pub fn gain_pair(&self) -> Result<Option<GainPair>, CliError> {
        let Some(g) = &self.gains else { return Ok(None) };
        let s = &self.model;
        Ok(Some(GainPair::new(matrix("gains.L", &g.l, s.n, s.p)?, matrix("gains.K", &g.k, s.m, s.n)?)))
    }

    pub fn horizon_eps(&self) -> f64 {
        match self.horizon {
            HorizonPolicy::Eps(e) => e,
            HorizonPolicy::K(_) => DEFAULT_HORIZON_EPS,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse(&text).map_err(|e| match e {
        CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
        other => other,
    })
}
