//! Value-level kernels shared by the tape and by callers that only need
//! a forward pass.

use super::Tensor;
use crate::error::{ensure, Result};

/// Additive guard inside the log of the cross-entropy.
pub const CE_CLIP: f64 = 1e-12;

/// `y[j] = sum_k x[k] * w[k][j] + b[j]` for `w` of shape `in x out`.
pub fn linear(w: &Tensor, x: &[f64], b: Option<&[f64]>) -> Result<Vec<f64>> {
    ensure!(
        w.shape().len() == 2 && w.rows() == x.len(),
        "linear: weight {:?} against input of length {}",
        w.shape(),
        x.len()
    );
    let out = w.cols();
    let mut y = match b {
        Some(b) => {
            ensure!(b.len() == out, "linear: bias {} against output {out}", b.len());
            b.to_vec()
        }
        None => vec![0.0; out],
    };
    accumulate_rows(w.data(), out, 0, x, &mut y);
    Ok(y)
}

/// Adds `x^T w[offset..offset + x.len()]` into `y`.
#[inline]
pub(crate) fn accumulate_rows(w: &[f64], out: usize, offset: usize, x: &[f64], y: &mut [f64]) {
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let row = &w[(offset + k) * out..(offset + k + 1) * out];
        for (yj, wj) in y.iter_mut().zip(row) {
            *yj += xk * wj;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn embedding_lookup(table: &Tensor, index: usize) -> Result<Vec<f64>> {
    ensure!(
        index < table.rows(),
        "embedding index {index} out of range for {} rows",
        table.rows()
    );
    Ok(table.row(index).to_vec())
}

/// `-ln(probs[target] + CE_CLIP)`; `probs` must be a distribution.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64> {
    ensure!(target < probs.len(), "target {target} outside {} classes", probs.len());
    let sum: f64 = probs.iter().sum();
    ensure!(
        probs.iter().all(|&p| p >= 0.0 && p.is_finite()) && (sum - 1.0).abs() < 1e-6,
        "cross_entropy: not a probability distribution (sum {sum})"
    );
    Ok(-(probs[target] + CE_CLIP).ln())
}
