//! Trend / realized-volatility conditions and return standardization.
//!
//! All condition math operates on *scaled* returns: logarithmic returns
//! multiplied by 100. The trend is the sum of scaled returns over a day and
//! realized volatility is the sum of their squares.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::math;

/// Multiplier applied to log returns before any condition is computed.
pub const RETURN_SCALE: f64 = 100.0;

/// The conditioning signal: (trend, realized volatility) in scaled-return units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionPair {
    /// Sum of scaled returns; equals 100 * (log p_T - log p_0).
    pub trend: f64,
    /// Sum of squared scaled returns.
    pub rv: f64,
}

impl ConditionPair {
    pub fn new(trend: f64, rv: f64) -> Self {
        Self { trend, rv }
    }

    /// Compute the condition pair from a day's scaled returns.
    pub fn from_scaled_returns(scaled: &[f64]) -> Self {
        let trend = scaled.iter().sum();
        let rv = scaled.iter().map(|r| r * r).sum();
        Self { trend, rv }
    }

    pub fn is_finite(&self) -> bool {
        self.trend.is_finite() && self.rv.is_finite()
    }
}

/// Log returns of a price path, already multiplied by [`RETURN_SCALE`].
pub fn scaled_log_returns(prices: &[f64]) -> Vec<f64> {
    prices
        .windows(2)
        .map(|w| RETURN_SCALE * (math::ln(w[1]) - math::ln(w[0])))
        .collect()
}

/// Global moments of the pooled training scaled returns.
///
/// The same stats are applied to every split; the transform is invertible via
/// `r = r_tilde * std + mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: f64,
    pub std: f64,
}

impl StandardizationStats {
    /// Fit from the pooled training returns (unbiased sample std).
    pub fn fit(pooled: &[f64]) -> Result<Self, CoreError> {
        if pooled.len() < 2 {
            return Err(CoreError::TooShort {
                need: 2,
                got: pooled.len(),
            });
        }
        let (mean, std) = math::mean_std(pooled);
        if std <= 0.0 {
            return Err(CoreError::ZeroVariance(String::from(
                "pooled training returns are constant",
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn destandardize(&self, x: f64) -> f64 {
        x * self.std + self.mean
    }

    pub fn standardize_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.standardize(x)).collect()
    }

    pub fn destandardize_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.destandardize(x)).collect()
    }
}
