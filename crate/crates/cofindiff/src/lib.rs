//! Controllable financial time-series generation toolkit.
//!
//! Pipeline: minute-bar ingestion -> wavelet image encoding -> conditional
//! diffusion model with cross-attention conditioning -> inverse transform,
//! plus statistical and adversarial baselines, a stylized-fact / condition-
//! fidelity / diversity evaluation suite, and a deep-hedging downstream
//! harness. The pure numerical kernels live in `cofindiff-core`.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod diffusion;
pub mod error;
pub mod hedging;
pub mod market_data;
pub mod nn;
pub mod stages;
pub mod tensor;

pub use error::AppError;
