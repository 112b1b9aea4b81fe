//! Ellipsoidal reachable-set bounds for stealthy (zero-alarm) sensor attacks on
//! observer-based LTI feedback loops, and co-design of observer/controller
//! gains that trade closed-loop noise-to-output performance against the size
//! of the attacker's reachable set.
//!
//! Module map:
//! - [`ellipsoid`]: support functions, linear maps, exact and outer-bound
//!   geometric sums of ellipsoids.
//! - [`lti`]: plant validation, chi-squared thresholds, noise truncation,
//!   steady-state estimation and residual covariances, stacked closed loop.
//! - [`reachability`]: attack/noise shape sequences, horizon selection,
//!   minimum-trace reachable-set bound, exact boundary, Monte-Carlo check.
//! - [`performance`]: output-covariance-constrained gain, its analytic
//!   partial derivatives and the minimum-gain solve.
//! - [`codesign`]: constrained minimization of the attack objective and the
//!   performance/security trade-off sweep.

pub mod case_study;
pub mod codesign;
pub mod ellipsoid;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod lti;
pub mod optim;
pub mod performance;
pub mod reachability;

pub use error::{Error, Result};
pub use exec::Execution;
