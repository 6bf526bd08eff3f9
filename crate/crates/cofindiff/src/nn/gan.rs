//! Conditional adversarial generator and critic networks. Both operate on
//! flat length-300 standardized-return vectors with the (trend, rv) condition
//! pair concatenated to their inputs.

use candle_core::{Device, Tensor};
use candle_nn::{VarBuilder, VarMap};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cofindiff_core::ConditionPair;

use super::Mlp;
use crate::error::{AppError, Result};
use crate::tensor::randn_tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanFlavor {
    /// Least-squares adversarial loss (the "vanilla" baseline).
    LeastSquares,
    /// Wasserstein objective with critic weight clipping.
    Wasserstein,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub flavor: GanFlavor,
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Critic weight clip bound; only used by the Wasserstein flavor.
    pub clip_bound: f64,
    pub series_len: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            flavor: GanFlavor::LeastSquares,
            latent_dim: 32,
            generator_hidden: vec![128, 128],
            critic_hidden: vec![128, 128],
            clip_bound: 0.01,
            series_len: cofindiff_core::DAY_STEPS,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.latent_dim == 0 {
            problems.push("latent_dim must be positive".to_string());
        }
        if self.series_len == 0 {
            problems.push("series_len must be positive".to_string());
        }
        if self.flavor == GanFlavor::Wasserstein && self.clip_bound <= 0.0 {
            problems.push(format!(
                "clip_bound must be positive for the wasserstein flavor, got {}",
                self.clip_bound
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AppError::Validation(problems))
        }
    }
}

/// Stack conditions (already rescaled) into a (B, 2) tensor.
pub fn condition_tensor(conds: &[ConditionPair], dev: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(2 * conds.len());
    for c in conds {
        if !c.is_finite() {
            return Err(AppError::Other(format!(
                "non-finite condition ({}, {})",
                c.trend, c.rv
            )));
        }
        data.push(c.trend);
        data.push(c.rv);
    }
    Ok(Tensor::from_vec(data, (conds.len(), 2), dev)?)
}

/// Generator: (latent, trend, rv) -> standardized return vector.
pub struct Generator {
    net: Mlp,
    latent_dim: usize,
}

impl Generator {
    pub fn new(cfg: &GanConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let mut dims = vec![cfg.latent_dim + 2];
        dims.extend_from_slice(&cfg.generator_hidden);
        dims.push(cfg.series_len);
        Ok(Self {
            net: Mlp::new(&dims, vb)?,
            latent_dim: cfg.latent_dim,
        })
    }

    pub fn forward(&self, latent: &Tensor, conds: &Tensor) -> Result<Tensor> {
        self.net.forward(&Tensor::cat(&[latent, conds], 1)?)
    }

    /// Draw a batch of latents from `rng` and run the generator.
    pub fn sample(
        &self,
        conds: &[ConditionPair],
        rng: &mut ChaCha8Rng,
        dev: &Device,
    ) -> Result<Tensor> {
        let z = randn_tensor((conds.len(), self.latent_dim), rng, dev)?;
        self.forward(&z, &condition_tensor(conds, dev)?)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// Critic / discriminator: (series, trend, rv) -> score per sample.
pub struct Critic {
    net: Mlp,
}

impl Critic {
    pub fn new(cfg: &GanConfig, vb: VarBuilder) -> Result<Self> {
        let mut dims = vec![cfg.series_len + 2];
        dims.extend_from_slice(&cfg.critic_hidden);
        dims.push(1);
        Ok(Self {
            net: Mlp::new(&dims, vb)?,
        })
    }

    /// Scores with shape (B,).
    pub fn forward(&self, series: &Tensor, conds: &Tensor) -> Result<Tensor> {
        Ok(self
            .net
            .forward(&Tensor::cat(&[series, conds], 1)?)?
            .squeeze(1)?)
    }
}

/// Clamp every variable in `varmap` to [-bound, bound] in place (Wasserstein
/// critic constraint).
pub fn clip_weights(varmap: &VarMap, bound: f64) -> Result<()> {
    for var in varmap.data().lock().unwrap().values() {
        let clipped = var.clamp(-bound, bound)?;
        var.set(&clipped)?;
    }
    Ok(())
}
