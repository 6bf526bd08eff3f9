//! Run configuration: one TOML file drives every pipeline stage. Unknown keys
//! are rejected; invariant violations are reported all at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cofindiff_core::schedule::SamplerVariance;
use cofindiff_core::DAY_STEPS;

use crate::error::{AppError, Result};
use crate::market_data::{ColumnMap, SessionGrid, SplitSpec, UpsampleTiers};
use crate::nn::denoiser::DenoiserConfig;
use crate::nn::gan::GanConfig;
use crate::nn::hedger::HedgerConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub diffusion: DiffusionConfig,
    pub baselines: BaselinesConfig,
    pub metrics: MetricsConfig,
    pub hedging: HedgingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            data: DataConfig::default(),
            diffusion: DiffusionConfig::default(),
            baselines: BaselinesConfig::default(),
            metrics: MetricsConfig::default(),
            hedging: HedgingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Minute-bar CSV. When absent the ingest stage requires a synthetic
    /// corpus section instead.
    pub source: Option<PathBuf>,
    pub columns: ColumnMap,
    pub session: SessionGrid,
    pub split: Option<SplitSpec>,
    pub upsample: UpsampleTiers,
    /// Synthetic GARCH corpus used when no CSV source is given.
    pub synth: SynthCorpusConfig,
}

/// Synthetic corpus: GARCH(1,1) scaled-return days used as a stand-in when no
/// real minute data is available.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthCorpusConfig {
    pub days: usize,
    pub omega: f64,
    pub lambda: f64,
    pub nu: f64,
    /// Fractions of the day count routed to val and test (train gets the rest).
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            days: 2000,
            omega: 0.1,
            lambda: 0.1,
            nu: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    /// Diffusion step count K.
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sampler_variance: SamplerVariance,
    pub denoiser: DenoiserConfig,
    pub train: TrainControl,
    /// Probability of replacing the condition with the null tokens per batch
    /// element during training.
    pub p_uncond: f64,
    /// Classifier-free guidance weight at sampling time.
    pub guidance_gamma: f64,
    /// Samples per requested condition in the generate stage.
    pub sample_count: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            sampler_variance: SamplerVariance::Beta,
            denoiser: DenoiserConfig::default(),
            train: TrainControl {
                epochs: 3000,
                lr: 1e-4,
                lr_min: 5e-6,
                patience: 100,
                batch_size: 32,
            },
            p_uncond: 0.1,
            guidance_gamma: 1.0,
            sample_count: 20,
        }
    }
}

/// Optimizer and early-stopping controls shared by the trainable models.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainControl {
    pub epochs: usize,
    /// Initial learning rate; cosine-decayed to `lr_min` across `epochs`.
    pub lr: f64,
    pub lr_min: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for TrainControl {
    fn default() -> Self {
        Self {
            epochs: 3000,
            lr: 1e-4,
            lr_min: 5e-6,
            patience: 100,
            batch_size: 32,
        }
    }
}

impl TrainControl {
    fn validate(&self, name: &str, problems: &mut Vec<String>) {
        if self.epochs == 0 {
            problems.push(format!("{name}.epochs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("{name}.lr must be positive, got {}", self.lr));
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr) {
            problems.push(format!(
                "{name}.lr_min must satisfy 0 < lr_min <= lr, got {}",
                self.lr_min
            ));
        }
        if self.batch_size == 0 {
            problems.push(format!("{name}.batch_size must be positive"));
        }
    }

    /// Cosine decay from `lr` to `lr_min` over the epoch budget.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr;
        }
        let t = (epoch.min(self.epochs - 1)) as f64 / (self.epochs - 1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
        self.lr_min + (self.lr - self.lr_min) * cos
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    pub gbm_mu: f64,
    pub gbm_sigma: f64,
    pub garch_omega: f64,
    pub garch_lambda: f64,
    pub garch_nu: f64,
    /// Days simulated by each statistical baseline in eval-stylized.
    pub days: usize,
    pub gan: GanConfig,
    pub gan_train: GanTrainControl,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        Self {
            gbm_mu: 0.0,
            gbm_sigma: 1.0,
            garch_omega: 0.1,
            garch_lambda: 0.1,
            garch_nu: 0.8,
            days: 1500,
            gan: GanConfig::default(),
            gan_train: GanTrainControl::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainControl {
    pub epochs: usize,
    pub lr: f64,
    pub patience: usize,
    pub batch_size: usize,
    /// Critic updates per generator update (Wasserstein flavor).
    pub n_critic: usize,
    /// Samples drawn per validation condition for the condition-MAE proxy.
    pub val_samples: usize,
}

impl Default for GanTrainControl {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-4,
            patience: 50,
            batch_size: 64,
            n_critic: 5,
            val_samples: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Held-out condition grid for eval-conditions: inclusive ranges with a
    /// fixed step.
    pub trend_min: f64,
    pub trend_max: f64,
    pub trend_step: f64,
    pub rv_min: f64,
    pub rv_max: f64,
    pub rv_step: f64,
    /// Samples generated per grid point.
    pub samples_per_condition: usize,
    /// Diversity harness: fixed conditions and sample count per condition.
    pub diversity_conditions: Vec<(f64, f64)>,
    pub diversity_samples: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            trend_min: -10.0,
            trend_max: 10.0,
            trend_step: 2.5,
            rv_min: 10.0,
            rv_max: 100.0,
            rv_step: 10.0,
            samples_per_condition: 3,
            diversity_conditions: vec![(10.0, 50.0), (-10.0, 50.0)],
            diversity_samples: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HedgingConfig {
    pub cost_rate: f64,
    pub strike: f64,
    pub erm_gamma: f64,
    pub cvar_alpha: f64,
    pub hedger: HedgerConfig,
    pub train: TrainControl,
    /// Learning rate and patience override for the uptrend slice.
    pub uptrend_lr: f64,
    pub uptrend_patience: usize,
    /// GBM training/evaluation path counts for hedge-train / hedge-eval.
    pub train_paths: usize,
    pub eval_paths: usize,
    /// Per-day volatility of the GBM episode generator.
    pub gbm_sigma: f64,
}

impl Default for HedgingConfig {
    fn default() -> Self {
        Self {
            cost_rate: 1e-4,
            strike: 1.0,
            erm_gamma: 100.0,
            cvar_alpha: 0.05,
            hedger: HedgerConfig::default(),
            train: TrainControl {
                epochs: 200,
                lr: 1e-5,
                lr_min: 1e-6,
                patience: 100,
                batch_size: 256,
            },
            uptrend_lr: 1e-4,
            uptrend_patience: 1000,
            train_paths: 2048,
            eval_paths: 10_000,
            gbm_sigma: 0.01,
        }
    }
}

impl RunConfig {
    /// Check every invariant, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let d = &self.diffusion;
        if d.steps == 0 {
            problems.push("diffusion.steps must be positive".to_string());
        }
        if !(d.beta_start > 0.0 && d.beta_start < d.beta_end && d.beta_end < 1.0) {
            problems.push(format!(
                "diffusion betas must satisfy 0 < beta_start < beta_end < 1, got ({}, {})",
                d.beta_start, d.beta_end
            ));
        }
        if !(0.0..1.0).contains(&d.p_uncond) {
            problems.push(format!(
                "diffusion.p_uncond must be in [0, 1), got {}",
                d.p_uncond
            ));
        }
        if !d.guidance_gamma.is_finite() {
            problems.push("diffusion.guidance_gamma must be finite".to_string());
        }
        if d.sample_count == 0 {
            problems.push("diffusion.sample_count must be positive".to_string());
        }
        if let Err(AppError::Validation(mut v)) = d.denoiser.validate() {
            problems.append(&mut v);
        }
        d.train.validate("diffusion.train", &mut problems);

        let b = &self.baselines;
        if b.gbm_sigma < 0.0 {
            problems.push(format!(
                "baselines.gbm_sigma must be nonnegative, got {}",
                b.gbm_sigma
            ));
        }
        if !(b.garch_omega >= 0.0 && b.garch_lambda >= 0.0 && b.garch_nu >= 0.0) {
            problems.push("baselines GARCH parameters must be nonnegative".to_string());
        }
        if b.garch_lambda + b.garch_nu >= 1.0 {
            problems.push(format!(
                "baselines GARCH stationarity requires lambda + nu < 1, got {}",
                b.garch_lambda + b.garch_nu
            ));
        }
        if b.days == 0 {
            problems.push("baselines.days must be positive".to_string());
        }
        if let Err(AppError::Validation(mut v)) = b.gan.validate() {
            problems.append(&mut v);
        }

        let m = &self.metrics;
        for (name, (lo, hi, step)) in [
            ("trend", (m.trend_min, m.trend_max, m.trend_step)),
            ("rv", (m.rv_min, m.rv_max, m.rv_step)),
        ] {
            if !(step > 0.0 && lo <= hi) {
                problems.push(format!(
                    "metrics {name} grid must have min <= max and positive step"
                ));
            }
        }
        if m.rv_min < 0.0 {
            problems.push(format!(
                "metrics.rv_min must be nonnegative, got {}",
                m.rv_min
            ));
        }
        if m.samples_per_condition == 0 || m.diversity_samples < 2 {
            problems.push("metrics sample counts must allow at least one pair".to_string());
        }

        let h = &self.hedging;
        if h.cost_rate < 0.0 {
            problems.push(format!(
                "hedging.cost_rate must be nonnegative, got {}",
                h.cost_rate
            ));
        }
        if h.strike <= 0.0 {
            problems.push(format!("hedging.strike must be positive, got {}", h.strike));
        }
        if h.erm_gamma <= 0.0 {
            problems.push(format!(
                "hedging.erm_gamma must be positive, got {}",
                h.erm_gamma
            ));
        }
        if !(h.cvar_alpha > 0.0 && h.cvar_alpha < 1.0) {
            problems.push(format!(
                "hedging.cvar_alpha must be in (0, 1), got {}",
                h.cvar_alpha
            ));
        }
        if let Err(AppError::Validation(mut v)) = h.hedger.validate() {
            problems.append(&mut v);
        }
        h.train.validate("hedging.train", &mut problems);
        if h.train_paths == 0 || h.eval_paths == 0 {
            problems.push("hedging path counts must be positive".to_string());
        }

        let s = &self.data.synth;
        if s.lambda + s.nu >= 1.0 {
            problems.push(format!(
                "data.synth GARCH stationarity requires lambda + nu < 1, got {}",
                s.lambda + s.nu
            ));
        }
        if !(s.val_fraction >= 0.0
            && s.test_fraction >= 0.0
            && s.val_fraction + s.test_fraction < 1.0)
        {
            problems.push("data.synth val/test fractions must leave a train share".to_string());
        }
        if let Some(split) = &self.data.split {
            if let Err(AppError::Validation(mut v)) = split.validate() {
                problems.append(&mut v);
            }
        }
        if self.data.session.points < 2 {
            problems.push("data.session.points must be at least 2".to_string());
        }
        if self.data.session.points != DAY_STEPS + 1
            && self.diffusion.denoiser == DenoiserConfig::default()
        {
            // Non-default session lengths need a matching image layout; the
            // default denoiser shape only fits 300-return days.
            problems.push(format!(
                "data.session.points = {} requires a denoiser image shape sized for {} returns",
                self.data.session.points,
                self.data.session.points - 1
            ));
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(AppError::Validation(problems))
        }
    }
}

/// Parse a TOML config file; missing keys default to the published
/// hyperparameter values, unknown keys are rejected.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text)
        .map_err(|e| AppError::Validation(vec![format!("config parse error: {e}")]))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical TOML form of a config.
pub fn emit_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| AppError::Other(format!("config emit error: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_published_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.diffusion.steps, 1000);
        assert_eq!(cfg.diffusion.train.lr, 1e-4);
        assert_eq!(cfg.diffusion.train.lr_min, 5e-6);
        assert_eq!(cfg.diffusion.train.patience, 100);
        assert_eq!(cfg.diffusion.train.epochs, 3000);
        assert_eq!(cfg.diffusion.denoiser.attention_heads, 4);
        assert_eq!(cfg.diffusion.denoiser.base_channels, 20);
        assert_eq!(cfg.diffusion.guidance_gamma, 1.0);
        assert_eq!(cfg.hedging.cost_rate, 1e-4);
        assert_eq!(cfg.hedging.erm_gamma, 100.0);
        assert_eq!(cfg.hedging.cvar_alpha, 0.05);
        assert_eq!(cfg.hedging.uptrend_lr, 1e-4);
        assert_eq!(cfg.hedging.uptrend_patience, 1000);
    }

    #[test]
    fn out_of_range_beta_named_in_error() {
        let err = parse_config_str("[diffusion]\nbeta_end = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("beta"), "message: {msg}");
        assert!(msg.contains("1.5"), "message: {msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config_str("frobnicate = 3\n").unwrap_err();
        assert!(matches!(err, AppError::Validation(_)));
    }

    #[test]
    fn multiple_violations_reported_together() {
        let err = parse_config_str(
            "[diffusion]\nbeta_end = 1.5\np_uncond = 2.0\n[hedging]\ncvar_alpha = 3.0\n",
        )
        .unwrap_err();
        match err {
            AppError::Validation(problems) => assert!(problems.len() >= 3, "{problems:?}"),
            other => panic!("expected Validation, got {other:?}"),
        }
    }

    #[test]
    fn emit_parse_round_trip_is_identity() {
        let mut cfg = RunConfig {
            seed: 42,
            ..RunConfig::default()
        };
        cfg.diffusion.steps = 77;
        cfg.metrics.diversity_samples = 111;
        let text = emit_config(&cfg).unwrap();
        let parsed = parse_config_str(&text).unwrap();
        assert_eq!(parsed, cfg);
        // And the canonical form is a fixed point.
        assert_eq!(emit_config(&parsed).unwrap(), text);
    }

    #[test]
    fn cosine_lr_hits_both_endpoints() {
        let tc = TrainControl {
            epochs: 100,
            lr: 1e-4,
            lr_min: 5e-6,
            patience: 10,
            batch_size: 8,
        };
        assert!((tc.lr_at(0) - 1e-4).abs() < 1e-15);
        assert!((tc.lr_at(99) - 5e-6).abs() < 1e-15);
        assert!((tc.lr_at(200) - 5e-6).abs() < 1e-15);
        for e in 1..100 {
            assert!(tc.lr_at(e) <= tc.lr_at(e - 1) + 1e-18);
        }
    }
}
