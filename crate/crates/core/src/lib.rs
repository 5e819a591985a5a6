//! Numerical laboratory for a slowed-down solenoid attractor with polynomial
//! decay of correlations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod cli;
pub mod config;
pub mod constants;
pub mod ergostat;
pub mod error;
pub mod flowlab;
pub mod ode;
pub mod rng;
pub mod slowdown;
pub mod solenoid;
pub mod stats;

pub use error::{Error, Result};
