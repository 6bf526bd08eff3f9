//! The hedging policy network: a 5-layer perceptron over per-step market
//! features with layer normalization and ReLU activations, emitting the
//! position to hold over the next step.

use candle_core::{Tensor, D};
use candle_nn::{linear, Init, Linear, Module, VarBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

/// Number of per-step features seen by the policy: price, time to maturity,
/// previous position, volatility, delta, gamma, theta.
pub const POLICY_FEATURES: usize = 7;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct HedgerConfig {
    pub hidden_width: usize,
    /// Total number of fully connected layers, including the output layer.
    pub layers: usize,
}

impl Default for HedgerConfig {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            layers: 5,
        }
    }
}

impl HedgerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.layers < 2 {
            problems.push(format!("need at least 2 layers, got {}", self.layers));
        }
        if self.hidden_width == 0 {
            problems.push("hidden_width must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AppError::Validation(problems))
        }
    }
}

/// Plain layer normalization over the last dimension. Candle's fused op does
/// not support f64 on CPU, so the normalization is spelled out with basic
/// tensor operations.
struct Norm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl Norm {
    fn new(dim: usize, vb: VarBuilder) -> Result<Self> {
        Ok(Self {
            weight: vb.get_with_hints(dim, "weight", Init::Const(1.0))?,
            bias: vb.get_with_hints(dim, "bias", Init::Const(0.0))?,
            eps: 1e-5,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)?)
    }
}

pub struct HedgerNet {
    hidden: Vec<(Linear, Norm)>,
    out: Linear,
}

impl HedgerNet {
    pub fn new(cfg: &HedgerConfig, vb: VarBuilder) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.hidden_width;
        let mut hidden = Vec::with_capacity(cfg.layers - 1);
        let mut in_dim = POLICY_FEATURES;
        for i in 0..cfg.layers - 1 {
            let fc = linear(in_dim, w, vb.pp(format!("fc{i}")))?;
            let norm = Norm::new(w, vb.pp(format!("norm{i}")))?;
            hidden.push((fc, norm));
            in_dim = w;
        }
        let out = linear(in_dim, 1, vb.pp("out"))?;
        Ok(Self { hidden, out })
    }

    /// Positions with shape (B,) for feature rows of shape (B, 7).
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let (_b, f) = features.dims2()?;
        if f != POLICY_FEATURES {
            return Err(AppError::Other(format!(
                "policy expects {POLICY_FEATURES} features per row, got {f}"
            )));
        }
        let mut h = features.clone();
        for (fc, norm) in &self.hidden {
            h = norm.forward(&fc.forward(&h)?)?.relu()?;
        }
        Ok(self.out.forward(&h)?.squeeze(1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{device, randn_tensor, sample_rng, to_vec1, DTYPE};
    use candle_nn::VarMap;

    fn build() -> (HedgerNet, VarMap) {
        let dev = device();
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DTYPE, &dev);
        let net = HedgerNet::new(&HedgerConfig::default(), vb).unwrap();
        crate::tensor::deterministic_init(&varmap, 21).unwrap();
        (net, varmap)
    }

    #[test]
    fn output_is_one_position_per_row() {
        let (net, _vm) = build();
        let dev = device();
        let mut rng = sample_rng(8, 0);
        let x = randn_tensor((5, POLICY_FEATURES), &mut rng, &dev).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.dims(), &[5]);
        for v in to_vec1(&y).unwrap() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn wrong_feature_count_rejected() {
        let (net, _vm) = build();
        let dev = device();
        let mut rng = sample_rng(9, 0);
        let x = randn_tensor((2, 5), &mut rng, &dev).unwrap();
        assert!(net.forward(&x).is_err());
    }

    #[test]
    fn default_matches_paper_architecture() {
        let cfg = HedgerConfig::default();
        assert_eq!(cfg.layers, 5);
        assert_eq!(cfg.hidden_width, 64);
    }
}
