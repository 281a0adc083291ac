use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Per-patch mask weights for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskPlan {
    /// Weights are the classifier's patch probabilities; gradients flow.
    Soft,
    /// Precomputed binary pattern (random, grating).
    Fixed(Vec<f64>),
    /// Binarize patch probabilities at a threshold.
    Threshold(f64),
}

/// `E_m[:, n] = w[n]·E_mask[:, n] + (1 − w[n])·W_m·x_n`.
pub fn soft_mask(x_patches: &Matrix, weights: &[f64], mask_proj: &Matrix, mask_embedding: &Matrix) -> Result<Matrix> {
    let n = x_patches.cols();
    if weights.len() != n || mask_embedding.cols() != n || mask_proj.cols() != x_patches.rows() {
        return Err(Error::Shape {
            op: "soft_mask",
            left: x_patches.shape(),
            right: (weights.len(), mask_embedding.cols()),
        });
    }
    let mut out = Matrix::zeros(mask_proj.rows(), n);
    for j in 0..n {
        let proj = mask_proj.matvec(&x_patches.column(j));
        let w = weights[j];
        for (i, p) in proj.iter().enumerate() {
            out[(i, j)] = blend(w, mask_embedding[(i, j)], *p);
        }
    }
    Ok(out)
}

/// Exact at both endpoints: returns `mask` for `w = 1` and `proj` for `w = 0`.
#[inline]
pub(crate) fn blend(w: f64, mask: f64, proj: f64) -> f64 {
    if w == 0.0 {
        proj
    } else if w == 1.0 {
        mask
    } else {
        w * mask + (1.0 - w) * proj
    }
}

/// Masks patches whose index has parity `phase`.
pub fn grating_pattern(patches: usize, phase: usize) -> Vec<f64> {
    (0..patches).map(|i| if i % 2 == phase % 2 { 1.0 } else { 0.0 }).collect()
}

/// Independent Bernoulli(`ratio`) mask per patch.
pub fn random_pattern<R: Rng + ?Sized>(patches: usize, ratio: f64, rng: &mut R) -> Vec<f64> {
    (0..patches)
        .map(|_| if ratio > 0.0 && rng.random::<f64>() < ratio { 1.0 } else { 0.0 })
        .collect()
}

pub fn threshold_pattern(weights: &[f64], threshold: f64) -> Vec<f64> {
    weights.iter().map(|&w| if w > threshold { 1.0 } else { 0.0 }).collect()
}

/// Mean plus three population standard deviations.
pub fn calibrate_threshold(probabilities: &[f64]) -> f64 {
    if probabilities.is_empty() {
        return 0.5;
    }
    let n = probabilities.len() as f64;
    let mean = probabilities.iter().sum::<f64>() / n;
    let var = probabilities.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    mean + 3.0 * libm::sqrt(var)
}
