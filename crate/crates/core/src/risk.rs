//! Risk measures over terminal P&L samples. `X` is a gain; losses are `-X`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::math;

/// Entropic risk measure (1/gamma) log E[exp(-gamma X)], computed with a
/// max-shift so large gamma does not overflow. Lower is better.
pub fn erm(x_samples: &[f64], gamma: f64) -> Result<f64, CoreError> {
    if x_samples.is_empty() {
        return Err(CoreError::EmptyInput(String::from("erm samples")));
    }
    if gamma <= 0.0 {
        return Err(CoreError::InvalidParameter(String::from(
            "erm gamma must be positive",
        )));
    }
    let max_exponent = x_samples
        .iter()
        .map(|x| -gamma * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean_exp = x_samples
        .iter()
        .map(|x| math::exp(-gamma * x - max_exponent))
        .sum::<f64>()
        / x_samples.len() as f64;
    Ok((max_exponent + math::ln(mean_exp)) / gamma)
}

/// Empirical VaR and CVaR at level `alpha`, computed on losses L = -X.
///
/// VaR is the (1 - alpha)-quantile of L under the inf-definition on the
/// empirical CDF; CVaR is the mean of the ceil(alpha * n) largest losses.
pub fn var_cvar(x_samples: &[f64], alpha: f64) -> Result<(f64, f64), CoreError> {
    if x_samples.is_empty() {
        return Err(CoreError::EmptyInput(String::from("var/cvar samples")));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(CoreError::InvalidParameter(String::from(
            "alpha must be in (0, 1)",
        )));
    }
    let mut losses: Vec<f64> = x_samples.iter().map(|x| -x).collect();
    losses.sort_by(|a, b| a.partial_cmp(b).expect("non-finite loss sample"));
    let n = losses.len();
    // inf { x | P(L <= x) >= 1 - alpha } on the empirical CDF.
    let var_rank = (math::ceil((1.0 - alpha) * n as f64) as usize).clamp(1, n);
    let var = losses[var_rank - 1];
    let tail = (math::ceil(alpha * n as f64) as usize).clamp(1, n);
    let cvar = losses[n - tail..].iter().sum::<f64>() / tail as f64;
    Ok((var, cvar))
}
