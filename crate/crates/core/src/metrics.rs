//! Stylized-fact statistics, condition-fidelity aggregation, and pairwise
//! diversity measures.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::condition::ConditionPair;
use crate::error::CoreError;
use crate::math;

/// Lags reported for absolute-return autocorrelation.
pub const ACORR_LAGS: [usize; 5] = [1, 5, 10, 20, 30];

/// Hill-index band that counts as a fat tail, together with positive kurtosis.
pub const HILL_FAT_TAIL_BAND: (f64, f64) = (2.80, 3.40);

/// Default tail fraction for the Hill estimator.
pub const HILL_TAIL_FRACTION: f64 = 0.05;

/// Bias-corrected (Fisher) excess kurtosis with the unbiased sample std.
pub fn fisher_kurtosis(r: &[f64]) -> Result<f64, CoreError> {
    let n = r.len();
    if n < 4 {
        return Err(CoreError::TooShort { need: 4, got: n });
    }
    let mean = math::mean(r);
    let s = math::sample_std(r);
    if s <= 0.0 {
        return Err(CoreError::ZeroVariance(String::from(
            "kurtosis undefined for a constant series",
        )));
    }
    let nf = n as f64;
    let sum4: f64 = r
        .iter()
        .map(|x| {
            let z = (x - mean) / s;
            z * z * z * z
        })
        .sum();
    let lead = nf * (nf + 1.0) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0));
    let correction = 3.0 * (nf - 1.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
    Ok(lead * sum4 - correction)
}

/// Hill tail-index estimator on the top `tail_frac` order statistics.
///
/// Values are sorted ascending; with k = ceil(tail_frac * n) the estimate is
/// the inverse mean of log(r_(i) / r_(n-k+1)) over the k largest values. The
/// threshold term contributes log(1) = 0, as the index convention implies.
pub fn hill_index(values: &[f64], tail_frac: f64) -> Result<f64, CoreError> {
    let n = values.len();
    if n < 20 {
        return Err(CoreError::TooShort { need: 20, got: n });
    }
    if !(0.0 < tail_frac && tail_frac < 1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "tail fraction must be in (0, 1), got {tail_frac}"
        )));
    }
    let k = math::ceil(tail_frac * n as f64) as usize;
    let k = k.max(2);
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in hill input"));
    let threshold = sorted[n - k];
    if threshold <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "hill threshold must be positive, got {threshold}"
        )));
    }
    let mean_log: f64 = sorted[n - k..]
        .iter()
        .map(|v| math::ln(v / threshold))
        .sum::<f64>()
        / k as f64;
    if mean_log <= 0.0 {
        return Err(CoreError::ZeroVariance(String::from(
            "hill tail is degenerate (all tail values equal)",
        )));
    }
    Ok(1.0 / mean_log)
}

/// Autocorrelation at lag `tau` with biased normalization by the total sum of
/// squares.
pub fn autocorrelation(x: &[f64], tau: usize) -> Result<f64, CoreError> {
    let n = x.len();
    if tau == 0 || tau >= n {
        return Err(CoreError::InvalidParameter(format!(
            "lag {tau} out of range 1..{n}"
        )));
    }
    let mean = math::mean(x);
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return Err(CoreError::ZeroVariance(String::from(
            "autocorrelation undefined for a constant series",
        )));
    }
    let numer: f64 = (0..n - tau)
        .map(|t| (x[t] - mean) * (x[t + tau] - mean))
        .sum();
    Ok(numer / denom)
}

/// Classic dynamic-time-warping distance with |a_i - b_j| local cost and
/// {down, right, diagonal} steps, no window.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64, CoreError> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::EmptyInput(String::from("dtw input sequence")));
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut curr = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &ai in a {
        curr[0] = f64::INFINITY;
        for (j, &bj) in b.iter().enumerate() {
            let cost = math::abs(ai - bj);
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = cost + best;
        }
        core::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[b.len()])
}

/// Euclidean distance between equal-length sequences.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, CoreError> {
    if a.len() != b.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "euclidean distance needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(CoreError::EmptyInput(String::from("euclidean input")));
    }
    Ok(math::sqrt(
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    ))
}

/// Mean and standard deviation of a per-day statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = math::mean_std(xs);
        Self { mean, std }
    }
}

/// Stylized-fact summary over a corpus of daily return sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StylizedFactReport {
    pub kurtosis: MeanStd,
    pub hill: f64,
    /// (lag, mean, std) for the absolute-return autocorrelation, which
    /// drives the volatility-clustering verdict.
    pub acorr: Vec<(usize, MeanStd)>,
    /// (lag, mean, std) for the raw-return autocorrelation, the statistic
    /// tabulated in baseline comparison rows.
    pub acorr_raw: Vec<(usize, MeanStd)>,
    pub verdict_fat_tail: bool,
    pub verdict_vol_clustering: bool,
    pub days: usize,
}

/// Compute per-day kurtosis and |return| autocorrelations, the pooled Hill
/// index, and the two stylized-fact verdicts.
///
/// Fat tail: positive mean kurtosis and Hill index inside
/// [`HILL_FAT_TAIL_BAND`]. Volatility clustering: the mean absolute-return
/// autocorrelation exceeds two standard errors at every lag in [`ACORR_LAGS`].
pub fn stylized_fact_report(days: &[Vec<f64>]) -> Result<StylizedFactReport, CoreError> {
    if days.len() < 30 {
        return Err(CoreError::TooShort {
            need: 30,
            got: days.len(),
        });
    }
    let mut kurtoses = Vec::with_capacity(days.len());
    let mut acorr_per_lag: Vec<Vec<f64>> = vec![Vec::with_capacity(days.len()); ACORR_LAGS.len()];
    let mut raw_per_lag: Vec<Vec<f64>> = vec![Vec::with_capacity(days.len()); ACORR_LAGS.len()];
    let mut pooled_abs = Vec::new();
    for day in days {
        kurtoses.push(fisher_kurtosis(day)?);
        let abs_returns: Vec<f64> = day.iter().map(|r| math::abs(*r)).collect();
        for (slot, &lag) in acorr_per_lag.iter_mut().zip(ACORR_LAGS.iter()) {
            slot.push(autocorrelation(&abs_returns, lag)?);
        }
        for (slot, &lag) in raw_per_lag.iter_mut().zip(ACORR_LAGS.iter()) {
            slot.push(autocorrelation(day, lag)?);
        }
        pooled_abs.extend_from_slice(&abs_returns);
    }
    let hill = hill_index(&pooled_abs, HILL_TAIL_FRACTION)?;
    let kurtosis = MeanStd::of(&kurtoses);
    let acorr: Vec<(usize, MeanStd)> = ACORR_LAGS
        .iter()
        .zip(&acorr_per_lag)
        .map(|(&lag, xs)| (lag, MeanStd::of(xs)))
        .collect();
    let acorr_raw: Vec<(usize, MeanStd)> = ACORR_LAGS
        .iter()
        .zip(&raw_per_lag)
        .map(|(&lag, xs)| (lag, MeanStd::of(xs)))
        .collect();
    let (lo, hi) = HILL_FAT_TAIL_BAND;
    let verdict_fat_tail = kurtosis.mean > 0.0 && (lo..=hi).contains(&hill);
    let sqrt_days = math::sqrt(days.len() as f64);
    let verdict_vol_clustering = acorr
        .iter()
        .all(|(_, ms)| ms.mean > 2.0 * ms.std / sqrt_days);
    Ok(StylizedFactReport {
        kurtosis,
        hill,
        acorr,
        acorr_raw,
        verdict_fat_tail,
        verdict_vol_clustering,
        days: days.len(),
    })
}

/// One evaluated grid point of a condition-fidelity run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConditionScatterPoint {
    pub requested: ConditionPair,
    pub realized: ConditionPair,
}

/// Condition-fidelity summary: mean absolute error of realized trend and
/// realized volatility against the requested values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionMae {
    pub trend_mae: f64,
    pub rv_mae: f64,
    pub scatter: Vec<ConditionScatterPoint>,
}

/// Aggregate MAEs over (requested, realized) pairs.
pub fn condition_mae(points: &[ConditionScatterPoint]) -> Result<ConditionMae, CoreError> {
    if points.is_empty() {
        return Err(CoreError::EmptyInput(String::from("condition scatter")));
    }
    let n = points.len() as f64;
    let trend_mae = points
        .iter()
        .map(|p| math::abs(p.realized.trend - p.requested.trend))
        .sum::<f64>()
        / n;
    let rv_mae = points
        .iter()
        .map(|p| math::abs(p.realized.rv - p.requested.rv))
        .sum::<f64>()
        / n;
    Ok(ConditionMae {
        trend_mae,
        rv_mae,
        scatter: points.to_vec(),
    })
}

/// Rectangular held-out condition grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub trends: Vec<f64>,
    pub rvs: Vec<f64>,
}

impl ConditionGrid {
    pub fn points(&self) -> Vec<ConditionPair> {
        let mut out = Vec::with_capacity(self.trends.len() * self.rvs.len());
        for &t in &self.trends {
            for &v in &self.rvs {
                out.push(ConditionPair::new(t, v));
            }
        }
        out
    }

    /// Default validation grid: trend -10..=10 step 2.5, rv 10..=100 step 10.
    pub fn default_validation() -> Self {
        Self {
            trends: (0..9).map(|i| -10.0 + 2.5 * i as f64).collect(),
            rvs: (1..=10).map(|i| 10.0 * i as f64).collect(),
        }
    }
}

/// All-pairs diversity statistics for a fixed condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityReport {
    pub dtw: MeanStd,
    pub euclidean: MeanStd,
    pub pairs: usize,
}

/// DTW and Euclidean distances over all C(n, 2) sample pairs.
pub fn diversity_report(samples: &[Vec<f64>]) -> Result<DiversityReport, CoreError> {
    if samples.len() < 2 {
        return Err(CoreError::TooShort {
            need: 2,
            got: samples.len(),
        });
    }
    let len0 = samples[0].len();
    for s in samples {
        if s.len() != len0 {
            return Err(CoreError::ShapeMismatch(format!(
                "diversity samples must share a length; got {} and {}",
                len0,
                s.len()
            )));
        }
    }
    let n = samples.len();
    let mut dtw = Vec::with_capacity(n * (n - 1) / 2);
    let mut euc = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dtw.push(dtw_distance(&samples[i], &samples[j])?);
            euc.push(euclidean_distance(&samples[i], &samples[j])?);
        }
    }
    // Population std over the pair distances.
    let pair_stats = |xs: &[f64]| {
        let mean = math::mean(xs);
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        MeanStd {
            mean,
            std: math::sqrt(var),
        }
    };
    Ok(DiversityReport {
        dtw: pair_stats(&dtw),
        euclidean: pair_stats(&euc),
        pairs: dtw.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn kurtosis_of_normal_is_near_zero() {
        let xs = normal_sample(100_000, 1);
        let k = fisher_kurtosis(&xs).unwrap();
        assert!(k.abs() < 0.1, "kurtosis {k}");
    }

    #[test]
    fn kurtosis_of_student_t5_matches_analytic() {
        // Excess kurtosis of t(df) is 6 / (df - 4) = 6 for df = 5. The
        // estimator has infinite variance for t(5) (no 8th moment), so a
        // single sample scatters widely; average replications and use a band
        // consistent with the observed sampling spread.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t5 = rand_distr::StudentT::new(5.0).unwrap();
        let reps = 12;
        let mut total = 0.0;
        for _ in 0..reps {
            let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(t5)).collect();
            total += fisher_kurtosis(&xs).unwrap();
        }
        let k = total / reps as f64;
        assert!((k - 6.0).abs() < 1.5, "kurtosis {k}");
    }

    #[test]
    fn kurtosis_rejects_constant_input() {
        assert!(matches!(
            fisher_kurtosis(&[1.0, 1.0, 1.0, 1.0]),
            Err(CoreError::ZeroVariance(_))
        ));
    }

    #[test]
    fn kurtosis_scale_invariant() {
        let xs = normal_sample(5000, 3);
        let scaled: Vec<f64> = xs.iter().map(|x| 7.3 * x).collect();
        let a = fisher_kurtosis(&xs).unwrap();
        let b = fisher_kurtosis(&scaled).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn hill_three_point_tail() {
        // Tail {e^1, e^2, e^3} with k = 2: terms log(1) + log(e), mean 1/2.
        let mut xs = vec![0.1; 37];
        xs.extend_from_slice(&[1.0f64.exp(), 2.0f64.exp(), 3.0f64.exp()]);
        // n = 40, tail_frac 0.05 -> k = 2.
        let xi = hill_index(&xs, 0.05).unwrap();
        assert!((xi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hill_recovers_pareto_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pareto = rand_distr::Pareto::new(1.0, 3.0).unwrap();
        let xs: Vec<f64> = (0..450_000).map(|_| rng.sample(pareto)).collect();
        let xi = hill_index(&xs, 0.05).unwrap();
        assert!((xi - 3.0).abs() < 0.15, "hill {xi}");
    }

    #[test]
    fn hill_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pareto = rand_distr::Pareto::new(1.0, 2.5).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(pareto)).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| 11.0 * x).collect();
        let a = hill_index(&xs, 0.05).unwrap();
        let b = hill_index(&scaled, 0.05).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn autocorr_of_iid_noise_is_small() {
        let xs = normal_sample(10_000, 6);
        let rho = autocorrelation(&xs, 1).unwrap();
        assert!(rho.abs() < 0.05);
    }

    #[test]
    fn autocorr_of_ar1_matches_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = 0.5;
        let mut xs = vec![0.0f64; 1_000_000];
        for t in 1..xs.len() {
            let e: f64 = rng.sample(StandardNormal);
            xs[t] = phi * xs[t - 1] + e;
        }
        let rho = autocorrelation(&xs, 1).unwrap();
        assert!((rho - 0.5).abs() < 0.01, "rho {rho}");
    }

    #[test]
    fn autocorr_rejects_constant_series() {
        assert!(matches!(
            autocorrelation(&[2.0; 10], 1),
            Err(CoreError::ZeroVariance(_))
        ));
    }

    #[test]
    fn dtw_identical_is_zero_and_symmetric() {
        let a = normal_sample(50, 8);
        let b = normal_sample(50, 9);
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
        let ab = dtw_distance(&a, &b).unwrap();
        let ba = dtw_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab >= 0.0);
    }

    #[test]
    fn dtw_hand_example() {
        assert!((dtw_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    /// Exponential-time recursion used as the DTW oracle.
    fn dtw_recursive(a: &[f64], b: &[f64]) -> f64 {
        fn rec(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            if i == 0 && j == 0 {
                return (a[0] - b[0]).abs();
            }
            let mut best = f64::INFINITY;
            if i > 0 {
                best = best.min(rec(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(rec(a, b, i, j - 1));
            }
            if i > 0 && j > 0 {
                best = best.min(rec(a, b, i - 1, j - 1));
            }
            (a[i] - b[j]).abs() + best
        }
        rec(a, b, a.len() - 1, b.len() - 1)
    }

    #[test]
    fn dtw_matches_recursive_oracle_on_short_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let la = rng.gen_range(1..=10);
            let lb = rng.gen_range(1..=10);
            let a: Vec<f64> = (0..la).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let b: Vec<f64> = (0..lb).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let fast = dtw_distance(&a, &b).unwrap();
            let slow = dtw_recursive(&a, &b);
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn dtw_bounded_by_aligned_path_cost() {
        let a = normal_sample(40, 11);
        let b = normal_sample(40, 12);
        let aligned: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(dtw_distance(&a, &b).unwrap() <= aligned + 1e-12);
    }

    #[test]
    fn diversity_of_identical_samples_is_zero() {
        let s = normal_sample(30, 13);
        let samples = vec![s.clone(), s.clone(), s];
        let rep = diversity_report(&samples).unwrap();
        assert_eq!(rep.pairs, 3);
        assert_eq!(rep.dtw.mean, 0.0);
        assert_eq!(rep.euclidean.mean, 0.0);
    }

    #[test]
    fn diversity_pair_count_and_mean() {
        let samples = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![3.0, 3.0]];
        let rep = diversity_report(&samples).unwrap();
        assert_eq!(rep.pairs, 3);
        // DTW distances: 2, 6, 4 -> mean 4.
        assert!((rep.dtw.mean - 4.0).abs() < 1e-12);
    }

    #[test]
    fn diversity_rejects_mixed_lengths() {
        let samples = vec![vec![0.0, 0.0], vec![1.0]];
        assert!(matches!(
            diversity_report(&samples),
            Err(CoreError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn condition_mae_identity_and_zero_generator() {
        let requested: Vec<ConditionPair> = (-10..=10)
            .map(|t| ConditionPair::new(t as f64, 50.0))
            .collect();
        let exact: Vec<ConditionScatterPoint> = requested
            .iter()
            .map(|&c| ConditionScatterPoint {
                requested: c,
                realized: c,
            })
            .collect();
        let m = condition_mae(&exact).unwrap();
        assert_eq!(m.trend_mae, 0.0);
        assert_eq!(m.rv_mae, 0.0);

        let zero: Vec<ConditionScatterPoint> = requested
            .iter()
            .map(|&c| ConditionScatterPoint {
                requested: c,
                realized: ConditionPair::new(0.0, 0.0),
            })
            .collect();
        let m = condition_mae(&zero).unwrap();
        let expect = (-10..=10).map(|t: i32| t.abs() as f64).sum::<f64>() / 21.0;
        assert!((m.trend_mae - expect).abs() < 1e-12);
        assert!((m.rv_mae - 50.0).abs() < 1e-12);
    }

    #[test]
    fn stylized_report_on_gaussian_corpus_has_no_verdicts() {
        let days: Vec<Vec<f64>> = (0..100).map(|i| normal_sample(300, 100 + i)).collect();
        let rep = stylized_fact_report(&days).unwrap();
        assert!(!rep.verdict_fat_tail);
        assert!(rep.kurtosis.mean.abs() < 0.5);
        assert!(rep.hill > 3.4);
    }
}
