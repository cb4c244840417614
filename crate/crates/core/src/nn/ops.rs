//! Stateless activations shared by the heads and the losses.

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor2) -> Result<Tensor2> {
    if !logits.is_finite() {
        return Err(Error::Numerical {
            iteration: None,
            detail: "non-finite classifier logits".into(),
        });
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Pulls a gradient w.r.t. softmax probabilities back to the logits:
/// `dz = p ⊙ (dp − ⟨dp, p⟩)` per row.
pub fn softmax_backward(probs: &Tensor2, d_probs: &Tensor2) -> Tensor2 {
    let mut dz = Tensor2::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let dp = d_probs.row(r);
        let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
        for ((z, &pi), &dpi) in dz.row_mut(r).iter_mut().zip(p).zip(dp) {
            *z = pi * (dpi - inner);
        }
    }
    dz
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-sum-exp of the selected values; `-inf` when nothing is selected.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Backward pass of the gradient reversal layer: forward is the identity,
/// the incoming gradient is multiplied by `-coeff`.
pub fn gradient_reversal(grad: &Tensor2, coeff: f64) -> Tensor2 {
    debug_assert!(coeff >= 0.0);
    grad.map(|g| -coeff * g)
}

/// Forward pass of the gradient reversal layer.
#[inline]
pub fn gradient_reversal_forward(x: &Tensor2) -> &Tensor2 {
    x
}
