//! Zero-rate Black-Scholes indicators used as hedging-policy inputs.

use serde::{Deserialize, Serialize};

use crate::math;

/// Delta, gamma, and theta of a European call under zero rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsFeatures {
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// Greeks at spot `s`, strike `k`, volatility `sigma`, and time to maturity
/// `tau` (same time unit as `sigma`).
///
/// The `tau -> 0` (or `sigma -> 0`) limit is handled explicitly: delta becomes
/// a step in moneyness with 0.5 at the money, gamma and theta vanish.
pub fn bs_features(s: f64, k: f64, sigma: f64, tau: f64) -> BsFeatures {
    let vol_sqrt_tau = sigma * math::sqrt(tau.max(0.0));
    if vol_sqrt_tau <= 0.0 {
        let delta = match s.partial_cmp(&k) {
            Some(core::cmp::Ordering::Greater) => 1.0,
            Some(core::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
        return BsFeatures {
            delta,
            gamma: 0.0,
            theta: 0.0,
        };
    }
    let d1 = (math::ln(s / k) + 0.5 * vol_sqrt_tau * vol_sqrt_tau) / vol_sqrt_tau;
    let pdf = math::norm_pdf(d1);
    BsFeatures {
        delta: math::norm_cdf(d1),
        gamma: pdf / (s * vol_sqrt_tau),
        theta: -s * pdf * sigma / (2.0 * math::sqrt(tau)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_the_money_short_expiry_delta_is_half() {
        let f = bs_features(1.0, 1.0, 0.2, 1e-12);
        assert!((f.delta - 0.5).abs() < 1e-5);
        let f = bs_features(1.0, 1.0, 0.2, 0.0);
        assert_eq!(f.delta, 0.5);
        assert_eq!(f.gamma, 0.0);
        assert_eq!(f.theta, 0.0);
    }

    #[test]
    fn deep_in_the_money_limits() {
        let f = bs_features(10.0, 1.0, 0.2, 0.5);
        assert!(f.delta > 0.999);
        assert!(f.gamma < 1e-6);
    }

    #[test]
    fn expiry_step_function() {
        assert_eq!(bs_features(1.2, 1.0, 0.2, 0.0).delta, 1.0);
        assert_eq!(bs_features(0.8, 1.0, 0.2, 0.0).delta, 0.0);
    }

    #[test]
    fn reference_point_from_normal_table() {
        // S = K = 1, sigma = 0.2, tau = 1: d1 = 0.1, delta = Phi(0.1).
        let f = bs_features(1.0, 1.0, 0.2, 1.0);
        assert!((f.delta - 0.539_827_837_277).abs() < 1e-9);
        // gamma = phi(0.1) / 0.2, theta = -phi(0.1) * 0.2 / 2.
        let pdf = math::norm_pdf(0.1);
        assert!((f.gamma - pdf / 0.2).abs() < 1e-12);
        assert!((f.theta + pdf * 0.1).abs() < 1e-12);
    }

    #[test]
    fn delta_monotone_in_spot() {
        let mut prev = 0.0;
        for i in 1..50 {
            let s = 0.5 + i as f64 * 0.02;
            let d = bs_features(s, 1.0, 0.2, 0.5).delta;
            assert!(d >= prev);
            prev = d;
        }
    }
}
