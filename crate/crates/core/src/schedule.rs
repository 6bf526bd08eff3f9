//! Diffusion noise schedule: beta/alpha/alpha-bar sequences over K steps.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;

/// Which per-step sampler variance to use in the reverse process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerVariance {
    /// sigma_k^2 = beta_k.
    Beta,
    /// sigma_k^2 = (1 - abar_{k-1}) / (1 - abar_k) * beta_k.
    BetaTilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub sampler_sigma: Vec<f64>,
    pub variance: SamplerVariance,
}

impl NoiseSchedule {
    /// Linear beta schedule from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        variance: SamplerVariance,
    ) -> Result<Self, CoreError> {
        if steps == 0 {
            return Err(CoreError::InvalidParameter(
                "step count must be positive".to_string(),
            ));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(CoreError::InvalidParameter(format!(
                "require 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let beta: Vec<f64> = if steps == 1 {
            alloc::vec![beta_start]
        } else {
            (0..steps)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                })
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut running = 1.0;
        for a in &alpha {
            running *= a;
            alpha_bar.push(running);
        }
        let sampler_sigma = (0..steps)
            .map(|i| {
                let var = match variance {
                    SamplerVariance::Beta => beta[i],
                    SamplerVariance::BetaTilde => {
                        let abar_prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                        (1.0 - abar_prev) / (1.0 - alpha_bar[i]) * beta[i]
                    }
                };
                math::sqrt(var)
            })
            .collect();
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            sampler_sigma,
            variance,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// Closed-form forward noising: sqrt(abar_k) x0 + sqrt(1 - abar_k) eps,
    /// elementwise over matching slices. `k` is 1-based.
    pub fn q_sample(&self, x0: &[f64], k: usize, noise: &[f64]) -> Result<Vec<f64>, CoreError> {
        if k == 0 || k > self.steps() {
            return Err(CoreError::InvalidParameter(format!(
                "step {k} out of range 1..={}",
                self.steps()
            )));
        }
        if x0.len() != noise.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "x0 length {} != noise length {}",
                x0.len(),
                noise.len()
            )));
        }
        let abar = self.alpha_bar[k - 1];
        let (sa, sn) = (math::sqrt(abar), math::sqrt(1.0 - abar));
        Ok(x0
            .iter()
            .zip(noise)
            .map(|(x, e)| sa * x + sn * e)
            .collect())
    }

    /// One forward step of the Markov kernel q(x_k | x_{k-1}). `k` is 1-based.
    pub fn q_step(&self, x_prev: &[f64], k: usize, noise: &[f64]) -> Result<Vec<f64>, CoreError> {
        if k == 0 || k > self.steps() {
            return Err(CoreError::InvalidParameter(format!(
                "step {k} out of range 1..={}",
                self.steps()
            )));
        }
        let (sa, sb) = (math::sqrt(self.alpha[k - 1]), math::sqrt(self.beta[k - 1]));
        Ok(x_prev
            .iter()
            .zip(noise)
            .map(|(x, e)| sa * x + sb * e)
            .collect())
    }
}
