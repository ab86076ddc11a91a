//! Bernoulli deviance and its gradient in log-odds space.

use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-15;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Deviance of one observation at log-odds `raw`:
/// `-2 [y ln p + (1 - y) ln(1 - p)]` with `p = sigmoid(raw)`.
#[inline]
pub fn row_deviance(y: f64, raw: f64) -> f64 {
    2.0 * (softplus(raw) - y * raw)
}

/// Mean of `-2 [y ln p + (1 - y) ln(1 - p)]`, with `p` clamped to
/// `[1e-15, 1 - 1e-15]`.
pub fn bernoulli_deviance(labels: &[f64], probs: &[f64]) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::Input(format!(
            "{} labels but {} probabilities",
            labels.len(),
            probs.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Input("deviance of an empty sample".into()));
    }
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean deviance evaluated directly on log-odds.
pub fn deviance_of_raw(labels: &[f64], raw: &[f64]) -> f64 {
    labels
        .iter()
        .zip(raw)
        .map(|(&y, &f)| row_deviance(y, f))
        .sum::<f64>()
        / labels.len().max(1) as f64
}

/// Pseudo-residuals `y - sigmoid(F)`, the per-row negative gradient of the
/// log-loss. The gradient of the mean deviance is `-2 (y - p) / n`.
pub fn negative_gradient(labels: &[f64], raw: &[f64]) -> Vec<f64> {
    labels.iter().zip(raw).map(|(&y, &f)| y - sigmoid(f)).collect()
}
