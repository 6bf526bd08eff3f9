//! Bridging helpers between plain `f64` buffers and candle tensors.
//!
//! All randomness flows through explicitly seeded `ChaCha8Rng` streams so that
//! every training and sampling run is reproducible from its seed.

use candle_core::{DType, Device, Tensor};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;

pub const DTYPE: DType = DType::F64;

pub fn device() -> Device {
    Device::Cpu
}

/// Standard-normal tensor of the given shape drawn from `rng`.
pub fn randn_tensor<S: Into<candle_core::Shape>>(
    shape: S,
    rng: &mut ChaCha8Rng,
    dev: &Device,
) -> Result<Tensor> {
    let shape = shape.into();
    let n = shape.elem_count();
    let data: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(Tensor::from_vec(data, shape, dev)?)
}

/// An independent noise stream for sample `index` under a run `seed`; the
/// draw for one sample does not depend on how many samples are requested.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Deterministically re-initialize every trainable parameter from the seed.
///
/// The CPU backend cannot be seeded, so constructors first build the network
/// with candle's own (entropy-seeded) init and then call this to overwrite
/// the parameters in sorted-name order. Vars that are exactly all-zero or
/// all-one keep their values: those inits are structural (zeroed output
/// heads, normalization gains) and must survive. Everything else is drawn
/// from a Kaiming-style normal with fan-in taken from the trailing
/// dimensions; one-dimensional vars (biases) use a small fixed scale.
pub fn deterministic_init(varmap: &candle_nn::VarMap, seed: u64) -> Result<()> {
    let data = varmap.data().lock().unwrap();
    let mut names: Vec<String> = data.keys().cloned().collect();
    names.sort();
    let mut rng = sample_rng(seed ^ 0x1a17_5eed, 0);
    for name in &names {
        let var = &data[name];
        let t = var.as_tensor();
        let vals: Vec<f64> = t.flatten_all()?.to_vec1()?;
        if vals.iter().all(|&v| v == 0.0) || vals.iter().all(|&v| v == 1.0) {
            continue;
        }
        let dims = t.dims();
        let std = if dims.len() >= 2 {
            let fan_in = (t.elem_count() / dims[0]).max(1) as f64;
            (2.0 / fan_in).sqrt()
        } else {
            0.02
        };
        let fresh: Vec<f64> = (0..vals.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        var.set(&Tensor::from_vec(fresh, t.shape().clone(), t.device())?)?;
    }
    Ok(())
}

pub fn to_vec1(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.flatten_all()?.to_vec1::<f64>()?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DTYPE)?.to_scalar::<f64>()?)
}
