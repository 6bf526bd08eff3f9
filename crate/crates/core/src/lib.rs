//! Numerical core for controllable financial time-series generation.
//!
//! Everything in this crate is pure computation over slices and small value
//! types: the Haar wavelet image codec, trend/realized-volatility condition
//! math, diffusion noise schedules, stylized-fact statistics, risk measures,
//! Black-Scholes features, and the GBM/GARCH reference simulators. IO, file
//! formats, and the neural models live in the companion `cofindiff` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bs;
pub mod condition;
pub mod error;
pub mod math;
pub mod metrics;
pub mod risk;
pub mod schedule;
pub mod sim;
pub mod wavelet;

pub use condition::{ConditionPair, StandardizationStats};
pub use error::CoreError;
pub use schedule::NoiseSchedule;
pub use wavelet::{CoefficientPyramid, WaveletImage};

/// Intraday steps per trading day (5 hours of minute bars).
pub const DAY_STEPS: usize = 300;
