//! Phase-center-constrained beamforming (PCCB).
//!
//! Computes complex weights for a planar antenna array that keep a unit gain
//! (and optional nulls) in chosen directions while pulling the least-squares
//! phase center of the resulting beampattern towards the array origin.
//!
//! The crate is organised bottom-up:
//!
//! * [`array`] - geometry, element response, steering vectors, beampatterns.
//! * [`sphere`] - equal-area direction sampling and angular utilities.
//! * [`phase_center`] - phase extraction and the least-squares phase-center fit.
//! * [`objective`] - the regularized PCCB functional and its linear constraints.
//! * [`solver`] - an equality-constrained SQP minimizer and multi-start driver.
//! * [`experiment`] - CBF vs PCCB comparison runs, statistics and file export.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod error;
pub mod experiment;
pub mod objective;
pub mod phase_center;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// GNSS L1 carrier frequency, Hz.
pub const GNSS_L1_HZ: f64 = 1_575_420_000.0;
