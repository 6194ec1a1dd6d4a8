//! Stateless math used across blocks: stable softmax, floored cross-entropy,
//! ReLU, and their gradients.

use crate::error::{KpgError, Result};

/// Probability floor applied inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// `-ln p[target]` with the probability floor.
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64> {
    if target >= p.len() {
        return Err(KpgError::Input(format!(
            "cross_entropy: target {target} out of range for {} classes",
            p.len()
        )));
    }
    Ok(-(p[target].max(PROB_FLOOR)).ln())
}

/// Gradient of `cross_entropy(softmax(s), target)` with respect to the
/// logits `s`, scaled by `coeff`.
pub fn softmax_ce_grad(probs: &[f64], target: usize, coeff: f64) -> Vec<f64> {
    let mut g: Vec<f64> = probs.iter().map(|&p| coeff * p).collect();
    g[target] -= coeff;
    g
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
