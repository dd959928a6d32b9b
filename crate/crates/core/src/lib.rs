//! Calibration and verification of multi-component environmental forecasts.
//!
//! Forecast bundles (deterministic, control and an exchangeable ensemble) are
//! aligned with later measurements per horizon, calibrated with linear or
//! non-homogeneous Gaussian regression, selected by AIC, and verified with
//! bias, spread, KS, CRPS and PIT statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod regression;
pub mod rng;
pub mod selection;
pub mod serde_f64;
pub mod stats;
pub mod synthgen;
pub mod time;

pub use error::{Error, ErrorCategory, Result, ResultExt};
pub use time::Timestamp;
