//! Candle-backed neural models: the conditional denoiser, adversarial
//! generators, and the hedging policy network. Everything runs in f64 on CPU.

pub mod denoiser;
pub mod gan;
pub mod hedger;

use candle_core::Tensor;
use candle_nn::{Init, Linear, Module, VarBuilder};

use crate::error::Result;

/// Linear layer with a zero-initialized weight and bias; used for output
/// heads so a freshly built model predicts exactly zero.
pub fn linear_zero(in_dim: usize, out_dim: usize, vb: VarBuilder) -> Result<Linear> {
    let weight = vb.get_with_hints((out_dim, in_dim), "weight", Init::Const(0.0))?;
    let bias = vb.get_with_hints(out_dim, "bias", Init::Const(0.0))?;
    Ok(Linear::new(weight, Some(bias)))
}

/// Sinusoidal features of an integer step, the DDPM convention: half sine,
/// half cosine over geometrically spaced frequencies.
pub fn sinusoidal_embedding(steps: &[usize], dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(steps.len() * dim);
    for &k in steps {
        let k = k as f64;
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / (half.max(2) - 1) as f64).exp();
            out.push((k * freq).sin());
        }
        for i in 0..half {
            let freq = (-(10_000f64.ln()) * i as f64 / (half.max(2) - 1) as f64).exp();
            out.push((k * freq).cos());
        }
        out.extend(std::iter::repeat_n(0.0, dim.saturating_sub(2 * half)));
    }
    out
}

/// Mean squared error over all elements.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok(a.sub(b)?.sqr()?.mean_all()?)
}

/// A plain multilayer perceptron with ReLU activations.
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(dims: &[usize], vb: VarBuilder) -> Result<Self> {
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            layers.push(candle_nn::linear(
                dims[i],
                dims[i + 1],
                vb.pp(format!("layer{i}")),
            )?);
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}
