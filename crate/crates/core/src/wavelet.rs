//! Bidirectional codec between a return sequence and the rectangular
//! coefficient image consumed by the diffusion model.
//!
//! The forward pass runs the Haar recursion (pairwise mean/difference with a
//! 1/sqrt(2) normalization) on the input until the mean series has length 1,
//! duplicating the last element whenever a level has odd length. The detail
//! series plus the final mean are then embedded column-wise into a
//! zero-padded image: each level is stretched to the longest detail length by
//! repeating every coefficient, and the image is padded so both sides are
//! divisible by 8. For T = 300 this yields exactly 152 x 16.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

const SQRT_2: f64 = core::f64::consts::SQRT_2;

/// Multilevel Haar coefficients: detail series `d^1..d^L` plus the final
/// length-1 mean series.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPyramid {
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
    /// Length of the series each level consumed, before odd padding.
    pub input_lengths: Vec<usize>,
    pub origin_length: usize,
}

/// Per-column embedding descriptor: how many coefficients the column holds
/// and how often each one is repeated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub len: usize,
    pub rep: usize,
}

/// Everything needed to decode an image without recomputing the forward
/// transform; serialized into checkpoint metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageLayout {
    pub origin_length: usize,
    pub valid_rows: usize,
    pub rows: usize,
    pub cols: usize,
    pub columns: Vec<ColumnSpec>,
    pub input_lengths: Vec<usize>,
}

impl ImageLayout {
    /// The layout produced by `haar_forward` + `embed_image` for a length-T
    /// input at the default (divisible-by-8) capacity.
    pub fn for_length(t: usize) -> Result<Self, CoreError> {
        let pyr = haar_forward(&vec![0.0; t])?;
        Ok(embed_image(&pyr)?.layout)
    }
}

/// Rectangular coefficient image. Padded cells are exactly zero on encode and
/// ignored on decode.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletImage {
    values: Vec<f64>,
    layout: ImageLayout,
}

impl WaveletImage {
    /// Wrap raw row-major values (e.g. a model output) in a known layout.
    pub fn from_raw(layout: ImageLayout, values: Vec<f64>) -> Result<Self, CoreError> {
        if values.len() != layout.rows * layout.cols {
            return Err(CoreError::ShapeMismatch(format!(
                "expected {}x{} = {} values, got {}",
                layout.rows,
                layout.cols,
                layout.rows * layout.cols,
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn rows(&self) -> usize {
        self.layout.rows
    }

    pub fn cols(&self) -> usize {
        self.layout.cols
    }

    pub fn layout(&self) -> &ImageLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.layout.cols + col]
    }
}

fn round_up_to_8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

/// Multilevel Haar analysis with duplicate-last odd padding.
pub fn haar_forward(series: &[f64]) -> Result<CoefficientPyramid, CoreError> {
    if series.len() < 2 {
        return Err(CoreError::TooShort {
            need: 2,
            got: series.len(),
        });
    }
    let mut current = series.to_vec();
    let mut details = Vec::new();
    let mut input_lengths = Vec::new();
    while current.len() > 1 {
        input_lengths.push(current.len());
        if current.len() % 2 == 1 {
            let last = *current.last().expect("nonempty");
            current.push(last);
        }
        let half = current.len() / 2;
        let mut means = Vec::with_capacity(half);
        let mut diffs = Vec::with_capacity(half);
        for i in 0..half {
            let (a, b) = (current[2 * i], current[2 * i + 1]);
            means.push((a + b) / SQRT_2);
            diffs.push((a - b) / SQRT_2);
        }
        details.push(diffs);
        current = means;
    }
    Ok(CoefficientPyramid {
        details,
        approx: current,
        input_lengths,
        origin_length: series.len(),
    })
}

/// Multilevel Haar synthesis; exact inverse of [`haar_forward`].
pub fn haar_inverse(pyr: &CoefficientPyramid) -> Result<Vec<f64>, CoreError> {
    if pyr.details.len() != pyr.input_lengths.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "{} detail levels but {} recorded input lengths",
            pyr.details.len(),
            pyr.input_lengths.len()
        )));
    }
    if pyr.approx.len() != 1 {
        return Err(CoreError::ShapeMismatch(format!(
            "approx series must have length 1, got {}",
            pyr.approx.len()
        )));
    }
    let mut current = pyr.approx.clone();
    for (diffs, &true_len) in pyr.details.iter().rev().zip(pyr.input_lengths.iter().rev()) {
        if current.len() != diffs.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "mean series length {} does not match detail length {}",
                current.len(),
                diffs.len()
            )));
        }
        let mut child = Vec::with_capacity(2 * diffs.len());
        for (a, d) in current.iter().zip(diffs.iter()) {
            child.push((a + d) / SQRT_2);
            child.push((a - d) / SQRT_2);
        }
        child.truncate(true_len);
        current = child;
    }
    if current.len() != pyr.origin_length {
        return Err(CoreError::ShapeMismatch(format!(
            "reconstructed length {} differs from origin length {}",
            current.len(),
            pyr.origin_length
        )));
    }
    Ok(current)
}

/// Embed a pyramid at the default capacity: rows = ceil(T/2) and columns =
/// level count, each rounded up to a multiple of 8.
pub fn embed_image(pyr: &CoefficientPyramid) -> Result<WaveletImage, CoreError> {
    let valid_rows = pyr.origin_length.div_ceil(2);
    let n_cols = pyr.details.len() + 1;
    embed_image_with_capacity(pyr, round_up_to_8(valid_rows), round_up_to_8(n_cols))
}

/// Embed a pyramid into a `rows x cols` image with explicit capacity.
pub fn embed_image_with_capacity(
    pyr: &CoefficientPyramid,
    rows: usize,
    cols: usize,
) -> Result<WaveletImage, CoreError> {
    let valid_rows = pyr.origin_length.div_ceil(2);
    let n_cols = pyr.details.len() + 1;
    if n_cols > cols {
        return Err(CoreError::CapacityExceeded {
            need: n_cols,
            capacity: cols,
        });
    }
    if valid_rows > rows {
        return Err(CoreError::CapacityExceeded {
            need: valid_rows,
            capacity: rows,
        });
    }
    let mut values = vec![0.0; rows * cols];
    let mut columns = Vec::with_capacity(n_cols);
    let levels = pyr.details.iter().chain(core::iter::once(&pyr.approx));
    for (col, level) in levels.enumerate() {
        let len = level.len();
        let rep = valid_rows.div_ceil(len);
        for row in 0..valid_rows {
            values[row * cols + col] = level[row / rep];
        }
        columns.push(ColumnSpec { len, rep });
    }
    Ok(WaveletImage {
        values,
        layout: ImageLayout {
            origin_length: pyr.origin_length,
            valid_rows,
            rows,
            cols,
            columns,
            input_lengths: pyr.input_lengths.clone(),
        },
    })
}

/// Recover the pyramid from an image by stripping padding and averaging each
/// coefficient's repetition block. Exact on true embeddings; on model outputs
/// the block mean absorbs within-block noise.
pub fn extract_pyramid(img: &WaveletImage) -> Result<CoefficientPyramid, CoreError> {
    let layout = &img.layout;
    let mut levels = Vec::with_capacity(layout.columns.len());
    for (col, spec) in layout.columns.iter().enumerate() {
        let mut coeffs = Vec::with_capacity(spec.len);
        for block in 0..spec.len {
            let start = block * spec.rep;
            let end = ((block + 1) * spec.rep).min(layout.valid_rows);
            if start >= end {
                return Err(CoreError::ShapeMismatch(format!(
                    "column {col}: repetition block {block} is empty"
                )));
            }
            let sum: f64 = (start..end).map(|row| img.get(row, col)).sum();
            coeffs.push(sum / (end - start) as f64);
        }
        levels.push(coeffs);
    }
    let approx = levels.pop().ok_or_else(|| {
        CoreError::ShapeMismatch("layout has no columns".to_string())
    })?;
    Ok(CoefficientPyramid {
        details: levels,
        approx,
        input_lengths: layout.input_lengths.clone(),
        origin_length: layout.origin_length,
    })
}

/// Full decode: image -> pyramid -> series.
pub fn decode_series(img: &WaveletImage) -> Result<Vec<f64>, CoreError> {
    haar_inverse(&extract_pyramid(img)?)
}

/// Full encode: series -> pyramid -> image at default capacity.
pub fn encode_series(series: &[f64]) -> Result<WaveletImage, CoreError> {
    embed_image(&haar_forward(series)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_series(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect()
    }

    #[test]
    fn forward_small_example() {
        // Direct recursive evaluation of the pairwise formulas on [1,3,2,0].
        let pyr = haar_forward(&[1.0, 3.0, 2.0, 0.0]).unwrap();
        assert_eq!(pyr.details.len(), 2);
        assert!((pyr.details[0][0] + SQRT_2).abs() < 1e-12);
        assert!((pyr.details[0][1] - SQRT_2).abs() < 1e-12);
        assert!((pyr.details[1][0] - 1.0).abs() < 1e-12);
        assert!((pyr.approx[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_small_example() {
        let pyr = CoefficientPyramid {
            details: vec![vec![-SQRT_2, SQRT_2], vec![1.0]],
            approx: vec![3.0],
            input_lengths: vec![4, 2],
            origin_length: 4,
        };
        let series = haar_inverse(&pyr).unwrap();
        let expected = [1.0, 3.0, 2.0, 0.0];
        for (a, b) in series.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_series_has_zero_details() {
        let pyr = haar_forward(&[2.5; 64]).unwrap();
        for level in &pyr.details {
            for &d in level {
                assert!(d.abs() < 1e-12);
            }
        }
        let back = haar_inverse(&pyr).unwrap();
        for &x in &back {
            assert!((x - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_preserved_on_power_of_two_lengths() {
        // Orthonormality holds exactly when no odd padding occurs.
        for &len in &[8usize, 64, 256] {
            let xs = random_series(len, len as u64);
            let pyr = haar_forward(&xs).unwrap();
            let input_energy: f64 = xs.iter().map(|x| x * x).sum();
            let coeff_energy: f64 = pyr
                .details
                .iter()
                .flatten()
                .chain(pyr.approx.iter())
                .map(|c| c * c)
                .sum();
            assert!((input_energy - coeff_energy).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_length_300() {
        for seed in 0..20 {
            let xs = random_series(300, seed);
            let back = haar_inverse(&haar_forward(&xs).unwrap()).unwrap();
            let max_err = xs
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-10, "seed {seed}: max error {max_err}");
        }
    }

    #[test]
    fn image_shape_is_152_by_16_for_t_300() {
        let img = encode_series(&random_series(300, 7)).unwrap();
        assert_eq!(img.rows(), 152);
        assert_eq!(img.cols(), 16);
        // 9 detail levels + 1 mean series occupy 10 columns.
        assert_eq!(img.layout().columns.len(), 10);
        assert_eq!(img.layout().valid_rows, 150);
    }

    #[test]
    fn embed_small_capacity_example() {
        let pyr = haar_forward(&[1.0, 3.0, 2.0, 0.0]).unwrap();
        let img = embed_image_with_capacity(&pyr, 4, 4).unwrap();
        assert!((img.get(0, 0) + SQRT_2).abs() < 1e-12);
        assert!((img.get(1, 0) - SQRT_2).abs() < 1e-12);
        assert!((img.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((img.get(1, 1) - 1.0).abs() < 1e-12);
        assert!((img.get(0, 2) - 3.0).abs() < 1e-12);
        assert!((img.get(1, 2) - 3.0).abs() < 1e-12);
        for row in 0..4 {
            assert_eq!(img.get(row, 3), 0.0);
        }
        for col in 0..4 {
            assert_eq!(img.get(2, col), 0.0);
            assert_eq!(img.get(3, col), 0.0);
        }
    }

    #[test]
    fn capacity_error_names_requirement() {
        let pyr = haar_forward(&random_series(300, 1)).unwrap();
        match embed_image_with_capacity(&pyr, 152, 8) {
            Err(CoreError::CapacityExceeded { need, capacity }) => {
                assert_eq!(need, 10);
                assert_eq!(capacity, 8);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn extract_is_exact_inverse_of_embed() {
        for &len in &[4usize, 37, 300] {
            let pyr = haar_forward(&random_series(len, len as u64 + 100)).unwrap();
            let img = embed_image(&pyr).unwrap();
            let back = extract_pyramid(&img).unwrap();
            assert_eq!(back.details.len(), pyr.details.len());
            for (a, b) in back
                .details
                .iter()
                .flatten()
                .chain(back.approx.iter())
                .zip(pyr.details.iter().flatten().chain(pyr.approx.iter()))
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_mean_absorbs_zero_mean_noise() {
        let pyr = haar_forward(&random_series(300, 9)).unwrap();
        let img = embed_image(&pyr).unwrap();
        let layout = img.layout().clone();
        // Perturb each full repetition block with +eps/-eps pairs.
        let eps = 1e-3;
        let mut values = img.values().to_vec();
        for (col, spec) in layout.columns.iter().enumerate() {
            for block in 0..spec.len {
                let start = block * spec.rep;
                let end = ((block + 1) * spec.rep).min(layout.valid_rows);
                let n = end - start;
                if n >= 2 && n % 2 == 0 {
                    for (j, row) in (start..end).enumerate() {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        values[row * layout.cols + col] += sign * eps;
                    }
                }
            }
        }
        let noisy = WaveletImage::from_raw(layout, values).unwrap();
        let back = extract_pyramid(&noisy).unwrap();
        for (a, b) in back
            .details
            .iter()
            .flatten()
            .zip(pyr.details.iter().flatten())
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_image_decodes_to_zero_series() {
        let layout = ImageLayout::for_length(300).unwrap();
        let n = layout.rows * layout.cols;
        let img = WaveletImage::from_raw(layout, vec![0.0; n]).unwrap();
        let series = decode_series(&img).unwrap();
        assert_eq!(series.len(), 300);
        for &x in &series {
            assert_eq!(x, 0.0);
        }
    }

    #[test]
    fn linearity_of_codec() {
        let x = random_series(300, 21);
        let y = random_series(300, 22);
        let (a, b) = (1.7, -0.4);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        let ix = encode_series(&x).unwrap();
        let iy = encode_series(&y).unwrap();
        let ic = encode_series(&combo).unwrap();
        for ((vx, vy), vc) in ix.values().iter().zip(iy.values()).zip(ic.values()) {
            assert!((a * vx + b * vy - vc).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_too_short_input() {
        assert!(matches!(
            haar_forward(&[1.0]),
            Err(CoreError::TooShort { .. })
        ));
    }
}
