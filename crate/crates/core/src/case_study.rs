//! The two-state benchmark plant with its reference gain matrices.
//!
//! Entries are rounded; `R1` is slightly indefinite at
//! this precision and is clamped by [`crate::lti::validate_model`].

use nalgebra::DMatrix;

use crate::lti::{GainPair, PlantModel};

pub const FALSE_ALARM_RATE: f64 = 0.05;
pub const TRUNCATION_PROBABILITY: f64 = 0.95;
pub const HORIZON: usize = 35;

pub fn model() -> PlantModel {
    PlantModel::new(
        DMatrix::from_row_slice(2, 2, &[1.04, -0.14, 0.30, 0.63]),
        DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 1.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 1.0, 2.0]),
        DMatrix::from_row_slice(2, 2, &[0.018, -0.022, -0.022, 0.026]),
        DMatrix::from_row_slice(2, 2, &[0.0018, 0.0031, 0.0031, 0.0096]),
    )
    .expect("case-study dimensions are consistent")
}

/// Gains reported for the minimum output-covariance-constrained gain.
pub fn min_gain_gains() -> GainPair {
    GainPair::new(
        DMatrix::from_row_slice(2, 2, &[1.00, -0.97, -0.01, 0.26]),
        DMatrix::from_row_slice(2, 2, &[0.14, -2.04, -0.44, 1.41]),
    )
}

/// Gains reported for the performance target 2.11.
pub fn tradeoff_gains_2_11() -> GainPair {
    GainPair::new(
        DMatrix::from_row_slice(2, 2, &[0.24, -0.21, 0.46, -0.40]),
        DMatrix::from_row_slice(2, 2, &[-1.34, -1.70, 0.69, 0.87]),
    )
}
