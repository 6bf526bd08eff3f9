//! The conditional noise-prediction network: a three-level encoder-decoder
//! over wavelet images with residual blocks, a sinusoidal step embedding, and
//! cross-attention against condition tokens at the two coarsest resolutions.

use candle_core::{Device, Tensor};
use candle_nn::{
    conv2d, group_norm, linear, Conv2d, Conv2dConfig, GroupNorm, Init, Linear, Module,
    VarBuilder,
};
use serde::{Deserialize, Serialize};

use cofindiff_core::ConditionPair;

use crate::error::{AppError, Result};
use crate::tensor::DTYPE;

/// Architecture hyperparameters of the denoiser.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    /// Channel width of the finest level; levels use (c, 2c, 4c).
    pub base_channels: usize,
    pub attention_heads: usize,
    /// Width of each condition token.
    pub cond_embed_dim: usize,
    pub cond_tokens: usize,
    pub time_embed_dim: usize,
    pub norm_groups: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base_channels: 20,
            attention_heads: 4,
            cond_embed_dim: 32,
            cond_tokens: 4,
            time_embed_dim: 64,
            norm_groups: 4,
            rows: 152,
            cols: 16,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        // Two stride-2 downsamplings need divisibility by 4.
        if !self.rows.is_multiple_of(4) || !self.cols.is_multiple_of(4) {
            problems.push(format!(
                "image dims ({}, {}) must be divisible by 4",
                self.rows, self.cols
            ));
        }
        for (name, c) in [
            ("base_channels", self.base_channels),
            ("2*base_channels", 2 * self.base_channels),
        ] {
            if c % self.norm_groups != 0 {
                problems.push(format!(
                    "{name} = {c} not divisible by norm_groups = {}",
                    self.norm_groups
                ));
            }
        }
        for (lvl, c) in [(2, 2 * self.base_channels), (3, 4 * self.base_channels)] {
            if c % self.attention_heads != 0 {
                problems.push(format!(
                    "level-{lvl} channels {c} not divisible by attention_heads {}",
                    self.attention_heads
                ));
            }
        }
        if self.time_embed_dim < 2 || self.cond_embed_dim == 0 || self.cond_tokens == 0 {
            problems.push("embedding dimensions must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AppError::Validation(problems))
        }
    }
}

/// Maps the two rescaled condition scalars to `cond_tokens` tokens of width
/// `cond_embed_dim`: each scalar is affinely lifted, then a width-2
/// convolution over the two-token axis fans out to the final token count. A
/// learned token matrix stands in for the null (unconditional) branch.
pub struct ConditionEmbedding {
    lift_trend: Linear,
    lift_rv: Linear,
    fan_out: Linear, // acts as a kernel-2 convolution over the 2-token axis
    null_tokens: Tensor,
    tokens: usize,
    dim: usize,
}

impl ConditionEmbedding {
    fn new(cfg: &DenoiserConfig, vb: VarBuilder) -> Result<Self> {
        let dim = cfg.cond_embed_dim;
        let tokens = cfg.cond_tokens;
        Ok(Self {
            lift_trend: linear(1, dim, vb.pp("lift_trend"))?,
            lift_rv: linear(1, dim, vb.pp("lift_rv"))?,
            fan_out: linear(2 * dim, tokens * dim, vb.pp("fan_out"))?,
            null_tokens: vb.get_with_hints(
                (tokens, dim),
                "null_tokens",
                Init::Randn {
                    mean: 0.0,
                    stdev: 1.0,
                },
            )?,
            tokens,
            dim,
        })
    }

    /// Tokens for a batch of conditions, already rescaled by the training
    /// condition scales. Shape (B, tokens, dim).
    pub fn forward(&self, conds: &[ConditionPair], dev: &Device) -> Result<Tensor> {
        for c in conds {
            if !c.is_finite() {
                return Err(AppError::Other(format!(
                    "non-finite condition ({}, {})",
                    c.trend, c.rv
                )));
            }
        }
        let b = conds.len();
        let trend = Tensor::from_vec(
            conds.iter().map(|c| c.trend).collect::<Vec<f64>>(),
            (b, 1),
            dev,
        )?;
        let rv = Tensor::from_vec(
            conds.iter().map(|c| c.rv).collect::<Vec<f64>>(),
            (b, 1),
            dev,
        )?;
        let lifted = Tensor::cat(
            &[self.lift_trend.forward(&trend)?, self.lift_rv.forward(&rv)?],
            1,
        )?; // (B, 2*dim): the two lifted tokens side by side
        let fanned = self.fan_out.forward(&lifted)?; // (B, tokens*dim)
        Ok(fanned.reshape((b, self.tokens, self.dim))?)
    }

    /// The learned unconditional tokens, broadcast to a batch. Shape
    /// (B, tokens, dim); independent of any numeric condition.
    pub fn null(&self, batch: usize) -> Result<Tensor> {
        Ok(self
            .null_tokens
            .unsqueeze(0)?
            .broadcast_as((batch, self.tokens, self.dim))?
            .contiguous()?)
    }
}

struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time_proj: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(
        in_ch: usize,
        out_ch: usize,
        time_dim: usize,
        groups: usize,
        vb: VarBuilder,
    ) -> Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        let skip = if in_ch != out_ch {
            Some(conv2d(in_ch, out_ch, 1, Default::default(), vb.pp("skip"))?)
        } else {
            None
        };
        Ok(Self {
            norm1: group_norm(groups, in_ch, 1e-6, vb.pp("norm1"))?,
            conv1: conv2d(in_ch, out_ch, 3, cfg, vb.pp("conv1"))?,
            time_proj: linear(time_dim, out_ch, vb.pp("time_proj"))?,
            norm2: group_norm(groups, out_ch, 1e-6, vb.pp("norm2"))?,
            conv2: conv2d(out_ch, out_ch, 3, cfg, vb.pp("conv2"))?,
            skip,
        })
    }

    fn forward(&self, x: &Tensor, t_emb: &Tensor) -> Result<Tensor> {
        let mut h = self.norm1.forward(x)?.silu()?;
        h = self.conv1.forward(&h)?;
        let t = self.time_proj.forward(t_emb)?; // (B, out_ch)
        let (b, c) = t.dims2()?;
        h = h.broadcast_add(&t.reshape((b, c, 1, 1))?)?;
        h = self.norm2.forward(&h)?.silu()?;
        h = self.conv2.forward(&h)?;
        let residual = match &self.skip {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        Ok((h + residual)?)
    }
}

/// Cross-attention: image features are queries, condition tokens provide keys
/// and values. The output projection starts at zero so an untrained block is
/// the identity.
struct CrossAttention {
    norm: GroupNorm,
    to_q: Conv2d,
    to_k: Linear,
    to_v: Linear,
    proj: Conv2d,
    heads: usize,
}

impl CrossAttention {
    fn new(channels: usize, cond_dim: usize, heads: usize, groups: usize, vb: VarBuilder) -> Result<Self> {
        let proj_w = vb.get_with_hints(
            (channels, channels, 1, 1),
            "proj.weight",
            Init::Const(0.0),
        )?;
        let proj_b = vb.get_with_hints(channels, "proj.bias", Init::Const(0.0))?;
        Ok(Self {
            norm: group_norm(groups, channels, 1e-6, vb.pp("norm"))?,
            to_q: conv2d(channels, channels, 1, Default::default(), vb.pp("to_q"))?,
            to_k: linear(cond_dim, channels, vb.pp("to_k"))?,
            to_v: linear(cond_dim, channels, vb.pp("to_v"))?,
            proj: Conv2d::new(proj_w, Some(proj_b), Default::default()),
            heads,
        })
    }

    fn forward(&self, x: &Tensor, tokens: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let heads = self.heads;
        let head_dim = c / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let q = self.to_q.forward(&self.norm.forward(x)?)?; // (B, C, H, W)
        let q = q
            .reshape((b, heads, head_dim, h * w))?
            .transpose(2, 3)? // (B, heads, HW, head_dim)
            .reshape((b * heads, h * w, head_dim))?
            .contiguous()?;
        let n_tok = tokens.dim(1)?;
        let k = self
            .to_k
            .forward(tokens)? // (B, T, C)
            .reshape((b, n_tok, heads, head_dim))?
            .permute((0, 2, 1, 3))?
            .reshape((b * heads, n_tok, head_dim))?
            .contiguous()?;
        let v = self
            .to_v
            .forward(tokens)?
            .reshape((b, n_tok, heads, head_dim))?
            .permute((0, 2, 1, 3))?
            .reshape((b * heads, n_tok, head_dim))?
            .contiguous()?;

        let att = (q.matmul(&k.transpose(1, 2)?)? * scale)?; // (B*heads, HW, T)
        // `softmax_last_dim` is a fused forward-only op (`apply_op1_no_bwd`)
        // that silently detaches the gradient of the attention scores; the
        // composed softmax differentiates correctly.
        let att = candle_nn::ops::softmax(&att, candle_core::D::Minus1)?;
        let out = att.matmul(&v)?; // (B*heads, HW, head_dim)
        let out = out
            .reshape((b, heads, h * w, head_dim))?
            .transpose(2, 3)?
            .reshape((b, c, h, w))?
            .contiguous()?;
        Ok((x + self.proj.forward(&out)?)?)
    }
}

struct TimeEmbedding {
    fc1: Linear,
    fc2: Linear,
    dim: usize,
}

impl TimeEmbedding {
    fn new(dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            fc1: linear(dim, dim, vb.pp("fc1"))?,
            fc2: linear(dim, dim, vb.pp("fc2"))?,
            dim,
        })
    }

    fn forward(&self, steps: &[usize], dev: &Device) -> Result<Tensor> {
        let raw = super::sinusoidal_embedding(steps, self.dim);
        let t = Tensor::from_vec(raw, (steps.len(), self.dim), dev)?.to_dtype(DTYPE)?;
        Ok(self.fc2.forward(&self.fc1.forward(&t)?.silu()?)?)
    }
}

/// The full noise-prediction network.
pub struct Denoiser {
    cfg: DenoiserConfig,
    time_embed: TimeEmbedding,
    pub cond_embed: ConditionEmbedding,
    conv_in: Conv2d,
    enc1a: ResBlock,
    enc1b: ResBlock,
    down1: Conv2d,
    enc2a: ResBlock,
    attn2: CrossAttention,
    enc2b: ResBlock,
    down2: Conv2d,
    mid_a: ResBlock,
    mid_attn: CrossAttention,
    mid_b: ResBlock,
    up2: Conv2d,
    dec2a: ResBlock,
    dec_attn2: CrossAttention,
    dec2b: ResBlock,
    up1: Conv2d,
    dec1a: ResBlock,
    dec1b: ResBlock,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

impl Denoiser {
    pub fn new(cfg: DenoiserConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let (c1, c2, c3) = (
            cfg.base_channels,
            2 * cfg.base_channels,
            4 * cfg.base_channels,
        );
        let g = cfg.norm_groups;
        let td = cfg.time_embed_dim;
        let cd = cfg.cond_embed_dim;
        let heads = cfg.attention_heads;
        let pad1 = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        let down_cfg = Conv2dConfig {
            padding: 1,
            stride: 2,
            ..Default::default()
        };
        let out_w = vb.get_with_hints((1, c1, 3, 3), "conv_out.weight", Init::Const(0.0))?;
        let out_b = vb.get_with_hints(1, "conv_out.bias", Init::Const(0.0))?;
        Ok(Self {
            time_embed: TimeEmbedding::new(td, vb.pp("time_embed"))?,
            cond_embed: ConditionEmbedding::new(&cfg, vb.pp("cond_embed"))?,
            conv_in: conv2d(1, c1, 3, pad1, vb.pp("conv_in"))?,
            enc1a: ResBlock::new(c1, c1, td, g, vb.pp("enc1a"))?,
            enc1b: ResBlock::new(c1, c1, td, g, vb.pp("enc1b"))?,
            down1: conv2d(c1, c2, 3, down_cfg, vb.pp("down1"))?,
            enc2a: ResBlock::new(c2, c2, td, g, vb.pp("enc2a"))?,
            attn2: CrossAttention::new(c2, cd, heads, g, vb.pp("attn2"))?,
            enc2b: ResBlock::new(c2, c2, td, g, vb.pp("enc2b"))?,
            down2: conv2d(c2, c3, 3, down_cfg, vb.pp("down2"))?,
            mid_a: ResBlock::new(c3, c3, td, g, vb.pp("mid_a"))?,
            mid_attn: CrossAttention::new(c3, cd, heads, g, vb.pp("mid_attn"))?,
            mid_b: ResBlock::new(c3, c3, td, g, vb.pp("mid_b"))?,
            up2: conv2d(c3, c2, 3, pad1, vb.pp("up2"))?,
            dec2a: ResBlock::new(2 * c2, c2, td, g, vb.pp("dec2a"))?,
            dec_attn2: CrossAttention::new(c2, cd, heads, g, vb.pp("dec_attn2"))?,
            dec2b: ResBlock::new(c2, c2, td, g, vb.pp("dec2b"))?,
            up1: conv2d(c2, c1, 3, pad1, vb.pp("up1"))?,
            dec1a: ResBlock::new(2 * c1, c1, td, g, vb.pp("dec1a"))?,
            dec1b: ResBlock::new(c1, c1, td, g, vb.pp("dec1b"))?,
            norm_out: group_norm(g, c1, 1e-6, vb.pp("norm_out"))?,
            conv_out: Conv2d::new(out_w, Some(out_b), pad1),
            cfg,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    /// Predict the injected noise for a batch of noisy images at (1-based)
    /// steps `k`, conditioned on the given token matrices.
    pub fn forward(&self, x: &Tensor, steps: &[usize], tokens: &Tensor) -> Result<Tensor> {
        let (b, _c, h, w) = x.dims4()?;
        if h != self.cfg.rows || w != self.cfg.cols {
            return Err(AppError::Other(format!(
                "denoiser expects {}x{} images, got {h}x{w}",
                self.cfg.rows, self.cfg.cols
            )));
        }
        if steps.len() != b {
            return Err(AppError::Other(format!(
                "batch size {b} but {} steps given",
                steps.len()
            )));
        }
        let t = self.time_embed.forward(steps, x.device())?;

        let h0 = self.conv_in.forward(x)?;
        let mut h1 = self.enc1a.forward(&h0, &t)?;
        h1 = self.enc1b.forward(&h1, &t)?;

        let mut h2 = self.down1.forward(&h1)?;
        h2 = self.enc2a.forward(&h2, &t)?;
        h2 = self.attn2.forward(&h2, tokens)?;
        h2 = self.enc2b.forward(&h2, &t)?;

        let mut h3 = self.down2.forward(&h2)?;
        h3 = self.mid_a.forward(&h3, &t)?;
        h3 = self.mid_attn.forward(&h3, tokens)?;
        h3 = self.mid_b.forward(&h3, &t)?;

        let (_, _, h3h, h3w) = h3.dims4()?;
        let mut u2 = self
            .up2
            .forward(&h3.upsample_nearest2d(2 * h3h, 2 * h3w)?)?;
        u2 = Tensor::cat(&[u2, h2], 1)?;
        u2 = self.dec2a.forward(&u2, &t)?;
        u2 = self.dec_attn2.forward(&u2, tokens)?;
        u2 = self.dec2b.forward(&u2, &t)?;

        let (_, _, u2h, u2w) = u2.dims4()?;
        let mut u1 = self
            .up1
            .forward(&u2.upsample_nearest2d(2 * u2h, 2 * u2w)?)?;
        u1 = Tensor::cat(&[u1, h1], 1)?;
        u1 = self.dec1a.forward(&u1, &t)?;
        u1 = self.dec1b.forward(&u1, &t)?;

        Ok(self
            .conv_out
            .forward(&self.norm_out.forward(&u1)?.silu()?)?)
    }
}
