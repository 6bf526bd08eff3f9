//! Conditional DDPM training, classifier-free-guidance sampling, and
//! end-to-end series generation over wavelet images.

use std::collections::HashMap;
use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW, VarBuilder, VarMap};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cofindiff_core::condition::StandardizationStats;
use cofindiff_core::wavelet::{decode_series, encode_series, ImageLayout, WaveletImage};
use cofindiff_core::{ConditionPair, NoiseSchedule};

use crate::checkpoint;
use crate::config::DiffusionConfig;
use crate::error::{AppError, Result};
use crate::market_data::{condition_scales, standardize, DatasetSplit};
use crate::nn::denoiser::{Denoiser, DenoiserConfig};
use crate::nn::mse;
use crate::tensor::{device, randn_tensor, sample_rng, scalar, DTYPE};

pub const CHECKPOINT_KIND: &str = "diffusion";

/// Everything beyond the weights needed to reproduce generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionMeta {
    /// Diffusion step count; must agree with `schedule`.
    pub steps: usize,
    pub schedule: NoiseSchedule,
    pub denoiser: DenoiserConfig,
    /// Return standardization fitted on the training split.
    pub stats: StandardizationStats,
    /// Condition rescaling constants (training-split standard deviations).
    pub trend_scale: f64,
    pub rv_scale: f64,
    pub layout: ImageLayout,
    pub p_uncond: f64,
}

pub struct DiffusionModel {
    pub denoiser: Denoiser,
    pub varmap: VarMap,
    pub meta: DiffusionMeta,
}

/// One generated day: destandardized scaled returns plus the realized
/// condition they exhibit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedSeries {
    pub returns: Vec<f64>,
    pub requested: ConditionPair,
    pub realized: ConditionPair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

impl DiffusionModel {
    /// Fresh random weights for the given metadata.
    pub fn build(meta: DiffusionMeta, init_seed: u64) -> Result<Self> {
        if meta.steps != meta.schedule.steps() {
            return Err(AppError::Corrupt(format!(
                "metadata steps {} disagrees with schedule length {}",
                meta.steps,
                meta.schedule.steps()
            )));
        }
        if meta.layout.rows != meta.denoiser.rows || meta.layout.cols != meta.denoiser.cols {
            return Err(AppError::Corrupt(format!(
                "image layout {}x{} disagrees with denoiser {}x{}",
                meta.layout.rows, meta.layout.cols, meta.denoiser.rows, meta.denoiser.cols
            )));
        }
        let dev = device();
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DTYPE, &dev);
        let denoiser = Denoiser::new(meta.denoiser.clone(), vb)?;
        crate::tensor::deterministic_init(&varmap, init_seed)?;
        Ok(Self {
            denoiser,
            varmap,
            meta,
        })
    }

    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        checkpoint::save_checkpoint(dir, CHECKPOINT_KIND, seed, &self.meta, &self.varmap)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = checkpoint::load_meta::<DiffusionMeta>(dir, CHECKPOINT_KIND)?;
        let mut model = Self::build(meta.payload, 0)?;
        checkpoint::load_weights(dir, &mut model.varmap)?;
        Ok(model)
    }

    /// Condition tokens after rescaling by the training-split scales.
    pub fn tokens_for(&self, conds: &[ConditionPair]) -> Result<Tensor> {
        let rescaled: Vec<ConditionPair> = conds
            .iter()
            .map(|c| {
                ConditionPair::new(c.trend / self.meta.trend_scale, c.rv / self.meta.rv_scale)
            })
            .collect();
        self.denoiser.cond_embed.forward(&rescaled, &device())
    }

    /// Guided noise estimate: gamma * eps(cond) + (1 - gamma) * eps(null).
    /// At gamma = 1 only the conditional branch is evaluated.
    pub fn cfg_eps(
        &self,
        x: &Tensor,
        steps: &[usize],
        cond_tokens: &Tensor,
        gamma: f64,
    ) -> Result<Tensor> {
        if gamma == 1.0 {
            return self.denoiser.forward(x, steps, cond_tokens);
        }
        let null = self.denoiser.cond_embed.null(steps.len())?;
        let uncond = self.denoiser.forward(x, steps, &null)?;
        if gamma == 0.0 {
            return Ok(uncond);
        }
        let cond = self.denoiser.forward(x, steps, cond_tokens)?;
        Ok(((cond * gamma)? + (uncond * (1.0 - gamma))?)?)
    }

    /// Ancestral sampling of `count` images, one independent noise stream per
    /// sample index so results do not depend on the batch size.
    pub fn sample_images(
        &self,
        cond: ConditionPair,
        gamma: f64,
        count: usize,
        seed: u64,
    ) -> Result<Vec<WaveletImage>> {
        if count == 0 {
            return Err(AppError::Validation(vec![
                "sample count must be positive".to_string(),
            ]));
        }
        let dev = device();
        let (h, w) = (self.meta.layout.rows, self.meta.layout.cols);
        let sched = &self.meta.schedule;
        let big_k = sched.steps();
        let mut rngs: Vec<ChaCha8Rng> = (0..count).map(|i| sample_rng(seed, i as u64)).collect();

        let mut x = {
            let parts: Vec<Tensor> = rngs
                .iter_mut()
                .map(|rng| randn_tensor((1usize, 1usize, h, w), rng, &dev))
                .collect::<Result<_>>()?;
            Tensor::cat(&parts, 0)?
        };
        let tokens = self
            .tokens_for(&vec![cond; count])?;
        for k in (1..=big_k).rev() {
            let steps = vec![k; count];
            let eps = self.cfg_eps(&x, &steps, &tokens, gamma)?;
            let alpha = sched.alpha[k - 1];
            let beta = sched.beta[k - 1];
            let abar = sched.alpha_bar[k - 1];
            let coef = beta / (1.0 - abar).sqrt();
            let mean = ((x - (eps * coef)?)? * (1.0 / alpha.sqrt()))?;
            x = if k > 1 {
                let z: Vec<Tensor> = rngs
                    .iter_mut()
                    .map(|rng| randn_tensor((1usize, 1usize, h, w), rng, &dev))
                    .collect::<Result<_>>()?;
                (mean + (Tensor::cat(&z, 0)? * sched.sampler_sigma[k - 1])?)?
            } else {
                mean
            };
        }
        let flat = x.reshape((count, h * w))?;
        (0..count)
            .map(|i| {
                let values = flat.get(i)?.to_vec1::<f64>()?;
                Ok(WaveletImage::from_raw(self.meta.layout.clone(), values)?)
            })
            .collect()
    }

    /// Full generation: sample images, decode to standardized returns,
    /// destandardize, report realized conditions.
    pub fn generate_series(
        &self,
        cond: ConditionPair,
        gamma: f64,
        count: usize,
        seed: u64,
    ) -> Result<Vec<GeneratedSeries>> {
        let images = self.sample_images(cond, gamma, count, seed)?;
        images
            .into_iter()
            .map(|img| {
                let standardized = decode_series(&img)?;
                let returns: Vec<f64> = standardized
                    .iter()
                    .map(|&v| self.meta.stats.destandardize(v))
                    .collect();
                let realized = ConditionPair::from_scaled_returns(&returns);
                Ok(GeneratedSeries {
                    returns,
                    requested: cond,
                    realized,
                })
            })
            .collect()
    }
}

/// Noise-prediction MSE for a known clean batch, step assignment, and noise;
/// the quantity both training and the gradient check differentiate.
pub fn eps_loss(
    model: &DiffusionModel,
    x0: &Tensor,
    steps: &[usize],
    noise: &Tensor,
    tokens: &Tensor,
) -> Result<Tensor> {
    let sched = &model.meta.schedule;
    let b = steps.len();
    let dev = x0.device();
    let sa: Vec<f64> = steps
        .iter()
        .map(|&k| sched.alpha_bar[k - 1].sqrt())
        .collect();
    let sn: Vec<f64> = steps
        .iter()
        .map(|&k| (1.0 - sched.alpha_bar[k - 1]).sqrt())
        .collect();
    let sa = Tensor::from_vec(sa, (b, 1, 1, 1), dev)?;
    let sn = Tensor::from_vec(sn, (b, 1, 1, 1), dev)?;
    let x_k = (x0.broadcast_mul(&sa)? + noise.broadcast_mul(&sn)?)?;
    let pred = model.denoiser.forward(&x_k, steps, tokens)?;
    mse(&pred, noise)
}

/// Per-element token selection between condition tokens and the null tokens.
fn mix_tokens(cond: &Tensor, null: &Tensor, drop: &[bool]) -> Result<Tensor> {
    let (b, t, d) = cond.dims3()?;
    let mask: Vec<f64> = drop.iter().map(|&x| if x { 0.0 } else { 1.0 }).collect();
    let mask = Tensor::from_vec(mask, (b, 1, 1), cond.device())?;
    let inv = (1.0 - &mask)?;
    let _ = (t, d);
    Ok((cond.broadcast_mul(&mask)? + null.broadcast_mul(&inv)?)?)
}

struct PreparedData {
    /// (N, 1, H, W) clean images.
    images: Tensor,
    conds: Vec<ConditionPair>,
    /// Index multiset honoring training multiplicities.
    multiset: Vec<usize>,
}

fn prepare(
    entries: &[crate::market_data::DatasetEntry],
    stats: &StandardizationStats,
    layout: &ImageLayout,
    expand_multiplicity: bool,
) -> Result<PreparedData> {
    let dev = device();
    let (h, w) = (layout.rows, layout.cols);
    let mut values = Vec::with_capacity(entries.len() * h * w);
    let mut conds = Vec::with_capacity(entries.len());
    let mut multiset = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let standardized = stats.standardize_slice(&e.day.scaled_returns);
        let img = encode_series(&standardized)?;
        if img.layout() != layout {
            return Err(AppError::Other(format!(
                "day {} produced a different image layout",
                e.day.date
            )));
        }
        values.extend_from_slice(img.values());
        conds.push(e.condition);
        let reps = if expand_multiplicity { e.multiplicity } else { 1 };
        for _ in 0..reps {
            multiset.push(i);
        }
    }
    let images = Tensor::from_vec(values, (entries.len(), 1, h, w), &dev)?;
    Ok(PreparedData {
        images,
        conds,
        multiset,
    })
}

fn snapshot(varmap: &VarMap) -> Result<HashMap<String, Tensor>> {
    let mut out = HashMap::new();
    for (name, var) in varmap.data().lock().unwrap().iter() {
        out.insert(name.clone(), var.as_tensor().copy()?);
    }
    Ok(out)
}

fn restore(varmap: &VarMap, snap: &HashMap<String, Tensor>) -> Result<()> {
    for (name, var) in varmap.data().lock().unwrap().iter() {
        let saved = snap
            .get(name)
            .ok_or_else(|| AppError::Other(format!("missing snapshot tensor {name}")))?;
        var.set(saved)?;
    }
    Ok(())
}

/// Train the conditional denoiser. Returns the best-validation model and the
/// loss history.
pub fn train_diffusion(
    split: &DatasetSplit,
    cfg: &DiffusionConfig,
    seed: u64,
) -> Result<(DiffusionModel, TrainReport)> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(AppError::Validation(vec![format!(
            "training needs nonempty train and val splits, got {} / {}",
            split.train.len(),
            split.val.len()
        )]));
    }
    let stats = standardize(
        &split
            .train
            .iter()
            .map(|e| e.day.clone())
            .collect::<Vec<_>>(),
    )?;
    let t = split.train[0].day.scaled_returns.len();
    let layout = ImageLayout::for_length(t)?;
    let (trend_scale, rv_scale) = condition_scales(&split.train);
    let schedule = NoiseSchedule::linear(
        cfg.steps,
        cfg.beta_start,
        cfg.beta_end,
        cfg.sampler_variance,
    )?;
    let meta = DiffusionMeta {
        steps: cfg.steps,
        schedule,
        denoiser: cfg.denoiser.clone(),
        stats,
        trend_scale,
        rv_scale,
        layout: layout.clone(),
        p_uncond: cfg.p_uncond,
    };
    let model = DiffusionModel::build(meta, seed)?;
    let dev = device();
    let (h, w) = (layout.rows, layout.cols);

    let train = prepare(&split.train, &stats, &layout, true)?;
    let val = prepare(&split.val, &stats, &layout, false)?;

    // Fixed validation noise and step assignment so epoch losses compare
    // the same integrand.
    let n_val = split.val.len();
    let mut val_rng = sample_rng(seed ^ 0x5eed_f00d, 0);
    let val_steps: Vec<usize> = (0..n_val)
        .map(|_| val_rng.gen_range(1..=cfg.steps))
        .collect();
    let val_noise = randn_tensor((n_val, 1, h, w), &mut val_rng, &dev)?;
    let val_tokens = model.tokens_for(&val.conds)?;

    let mut opt = AdamW::new(
        model.varmap.all_vars(),
        ParamsAdamW {
            lr: cfg.train.lr,
            ..Default::default()
        },
    )?;

    let mut rng = sample_rng(seed.wrapping_add(1), 0);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_weights = snapshot(&model.varmap)?;
    let mut since_best = 0usize;
    let mut train_losses = Vec::new();
    let mut val_losses = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.train.epochs {
        epochs_run = epoch + 1;
        opt.set_learning_rate(cfg.train.lr_at(epoch));
        let mut order = train.multiset.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.train.batch_size) {
            let idx = Tensor::from_vec(
                batch.iter().map(|&i| i as u32).collect::<Vec<u32>>(),
                batch.len(),
                &dev,
            )?;
            let x0 = train.images.index_select(&idx, 0)?;
            let steps: Vec<usize> =
                batch.iter().map(|_| rng.gen_range(1..=cfg.steps)).collect();
            let noise = randn_tensor((batch.len(), 1, h, w), &mut rng, &dev)?;
            let conds: Vec<ConditionPair> =
                batch.iter().map(|&i| train.conds[i]).collect();
            let cond_tokens = model.tokens_for(&conds)?;
            let null_tokens = model.denoiser.cond_embed.null(batch.len())?;
            let drop: Vec<bool> =
                batch.iter().map(|_| rng.gen::<f64>() < cfg.p_uncond).collect();
            let tokens = mix_tokens(&cond_tokens, &null_tokens, &drop)?;
            let loss = eps_loss(&model, &x0, &steps, &noise, &tokens)?;
            let loss_val = scalar(&loss)?;
            if !loss_val.is_finite() {
                return Err(AppError::Diverged(format!(
                    "non-finite training loss {loss_val} at epoch {epoch}"
                )));
            }
            opt.backward_step(&loss)?;
            epoch_loss += loss_val;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;
        train_losses.push(train_loss);

        let val_loss = scalar(&eps_loss(
            &model,
            &val.images,
            &val_steps,
            &val_noise,
            &val_tokens,
        )?)?;
        if !val_loss.is_finite() {
            return Err(AppError::Diverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        val_losses.push(val_loss);
        log::info!(
            "epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {:.2e}",
            cfg.train.lr_at(epoch)
        );
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_weights = snapshot(&model.varmap)?;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.train.patience {
                break;
            }
        }
    }
    restore(&model.varmap, &best_weights)?;
    let report = TrainReport {
        epochs_run,
        best_epoch,
        best_val_loss: best_val,
        final_train_loss: *train_losses.last().unwrap_or(&f64::NAN),
        train_losses,
        val_losses,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{DatasetEntry, DaySeries};
    use cofindiff_core::schedule::SamplerVariance;
    use crate::tensor::to_vec1;
    use chrono::NaiveDate;

    fn tiny_denoiser() -> DenoiserConfig {
        DenoiserConfig {
            base_channels: 4,
            attention_heads: 2,
            cond_embed_dim: 8,
            cond_tokens: 4,
            time_embed_dim: 8,
            norm_groups: 2,
            rows: 8,
            cols: 8,
        }
    }

    /// Meta for length-12 series (image 8x8 at capacity rounding).
    fn tiny_meta(steps: usize) -> DiffusionMeta {
        let layout = ImageLayout::for_length(12).unwrap();
        assert_eq!((layout.rows, layout.cols), (8, 8));
        DiffusionMeta {
            steps,
            schedule: NoiseSchedule::linear(steps, 1e-4, 0.02, SamplerVariance::Beta).unwrap(),
            denoiser: tiny_denoiser(),
            stats: StandardizationStats {
                mean: 0.0,
                std: 1.0,
            },
            trend_scale: 1.0,
            rv_scale: 1.0,
            layout,
            p_uncond: 0.1,
        }
    }

    fn day_from_returns(i: usize, returns: &[f64]) -> DatasetEntry {
        let mut prices = vec![100.0];
        for r in returns {
            let last = *prices.last().unwrap();
            prices.push(last * (r / 100.0f64).exp());
        }
        let day = DaySeries::from_prices(
            "T".into(),
            NaiveDate::from_num_days_from_ce_opt(735000 + i as i32).unwrap(),
            prices,
        );
        let condition = day.condition();
        DatasetEntry {
            day,
            condition,
            multiplicity: 1,
        }
    }

    #[test]
    fn sampling_is_deterministic_and_count_independent() {
        let model = DiffusionModel::build(tiny_meta(5), 3).unwrap();
        let cond = ConditionPair::new(1.0, 2.0);
        let one = model.sample_images(cond, 1.0, 1, 9).unwrap();
        let many = model.sample_images(cond, 1.0, 3, 9).unwrap();
        assert_eq!(one[0].values(), many[0].values());
        let again = model.sample_images(cond, 1.0, 3, 9).unwrap();
        assert_eq!(many[1].values(), again[1].values());
        assert_ne!(many[0].values(), many[1].values());
    }

    #[test]
    fn cfg_is_affine_in_gamma() {
        let model = DiffusionModel::build(tiny_meta(5), 4).unwrap();
        let dev = device();
        let mut rng = sample_rng(11, 0);
        let x = randn_tensor((2, 1, 8, 8), &mut rng, &dev).unwrap();
        let tokens = model
            .tokens_for(&[ConditionPair::new(1.0, 1.0), ConditionPair::new(-1.0, 2.0)])
            .unwrap();
        let steps = [2usize, 4];
        let null = model.denoiser.cond_embed.null(2).unwrap();
        let cond = model.denoiser.forward(&x, &steps, &tokens).unwrap();
        let uncond = model.denoiser.forward(&x, &steps, &null).unwrap();
        for gamma in [0.0, 1.0, 2.0, -0.5] {
            let got = model.cfg_eps(&x, &steps, &tokens, gamma).unwrap();
            let want = ((cond.clone() * gamma).unwrap()
                + (uncond.clone() * (1.0 - gamma)).unwrap())
            .unwrap();
            let (g, w) = (to_vec1(&got).unwrap(), to_vec1(&want).unwrap());
            for (a, b) in g.iter().zip(&w) {
                assert!((a - b).abs() < 1e-12, "gamma {gamma}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn one_step_schedule_with_oracle_denoiser_recovers_x0() {
        // With K = 1 the reverse mean is (x_1 - beta/sqrt(1-abar) eps)/sqrt(alpha)
        // = ((sqrt(abar) x0 + sqrt(1-abar) eps) - sqrt(beta) eps)/sqrt(alpha)
        // = x0 when eps_hat = eps exactly (abar = alpha = 1 - beta at K = 1).
        let sched = NoiseSchedule::linear(1, 0.01, 0.01, SamplerVariance::Beta).unwrap();
        let x0 = [0.7, -0.3, 1.2];
        let eps = [0.5, -1.1, 0.2];
        let x1 = sched.q_sample(&x0, 1, &eps).unwrap();
        let alpha = sched.alpha[0];
        let coef = sched.beta[0] / (1.0 - sched.alpha_bar[0]).sqrt();
        for i in 0..3 {
            let rec = (x1[i] - coef * eps[i]) / alpha.sqrt();
            assert!((rec - x0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_series_have_contract_shape_and_finite_conditions() {
        let model = DiffusionModel::build(tiny_meta(4), 5).unwrap();
        let out = model
            .generate_series(ConditionPair::new(0.5, 1.0), 1.0, 5, 13)
            .unwrap();
        assert_eq!(out.len(), 5);
        for g in &out {
            assert_eq!(g.returns.len(), 12);
            assert!(g.realized.trend.is_finite());
            assert!(g.realized.rv >= 0.0);
        }
    }

    #[test]
    fn loss_at_init_is_one_per_element() {
        // Zero-initialized output head predicts 0; E||eps||^2 / n = 1.
        let model = DiffusionModel::build(tiny_meta(6), 6).unwrap();
        let dev = device();
        let mut rng = sample_rng(17, 0);
        let n = 64;
        let x0 = Tensor::zeros((n, 1, 8, 8), DTYPE, &dev).unwrap();
        let noise = randn_tensor((n, 1, 8, 8), &mut rng, &dev).unwrap();
        let steps: Vec<usize> = (0..n).map(|i| 1 + i % 6).collect();
        let tokens = model
            .tokens_for(&vec![ConditionPair::new(0.0, 1.0); n])
            .unwrap();
        let loss = scalar(&eps_loss(&model, &x0, &steps, &noise, &tokens).unwrap()).unwrap();
        // Sample mean of chi-square_1 over 64*64 draws: well within 5% of 1.
        assert!((loss - 1.0).abs() < 0.05, "loss {loss}");
    }

    #[test]
    fn overfit_single_image_reduces_loss() {
        let returns: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 5) as f64 * 0.1 - 0.2).collect();
        let entries = [day_from_returns(0, &returns), day_from_returns(1, &returns)];
        let split = DatasetSplit {
            train: vec![entries[0].clone()],
            val: vec![entries[1].clone()],
            test: vec![],
        };
        let cfg = DiffusionConfig {
            steps: 8,
            denoiser: tiny_denoiser(),
            train: crate::config::TrainControl {
                epochs: 60,
                lr: 3e-3,
                lr_min: 1e-4,
                patience: 60,
                batch_size: 8,
            },
            p_uncond: 0.0,
            ..Default::default()
        };
        let (_model, report) = train_diffusion(&split, &cfg, 1).unwrap();
        let start: f64 = report.train_losses[..5].iter().sum::<f64>() / 5.0;
        let end: f64 = report.train_losses[report.train_losses.len() - 5..]
            .iter()
            .sum::<f64>()
            / 5.0;
        assert!(
            end < start,
            "training made no progress: start {start}, end {end}"
        );
    }

    #[test]
    fn empty_split_rejected() {
        let split = DatasetSplit::default();
        assert!(matches!(
            train_diffusion(&split, &DiffusionConfig::default(), 0),
            Err(AppError::Validation(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_reproduces_samples() {
        let model = DiffusionModel::build(tiny_meta(4), 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), 8).unwrap();
        let loaded = DiffusionModel::load(dir.path()).unwrap();
        let cond = ConditionPair::new(2.0, 3.0);
        let a = model.sample_images(cond, 1.0, 2, 21).unwrap();
        let b = loaded.sample_images(cond, 1.0, 2, 21).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn schedule_step_mismatch_is_corruption() {
        let mut meta = tiny_meta(4);
        meta.steps = 7;
        assert!(matches!(
            DiffusionModel::build(meta, 0),
            Err(AppError::Corrupt(_))
        ));
    }
}
