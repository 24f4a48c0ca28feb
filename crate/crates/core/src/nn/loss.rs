//! Softmax cross-entropy.

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub per_example: Vec<f64>,
}

/// Stable row softmax (max subtracted before exponentiation).
pub fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `−log softmax(row)[label]` computed via log-sum-exp.
pub fn row_cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    lse - logits[label]
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().position(|&y| y >= classes) {
        Some(index) => Err(Error::LabelOutOfRange {
            index,
            label: labels[index],
            classes,
        }),
        None => Ok(()),
    }
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(LossValue, Matrix)> {
    softmax_cross_entropy_weighted(logits, labels, None)
}

/// As [`softmax_cross_entropy`] with optional per-example loss weights:
/// `loss = (1/n) Σ wᵢ ℓᵢ`.
pub fn softmax_cross_entropy_weighted(
    logits: &Matrix,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<(LossValue, Matrix)> {
    let (n, classes) = logits.shape();
    if n == 0 {
        return Err(Error::Dimension(
            "cross-entropy needs at least one example".into(),
        ));
    }
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {n} logit rows",
            labels.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension(format!(
                "{} loss weights for {n} examples",
                w.len()
            )));
        }
    }
    check_labels(labels, classes)?;

    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, classes);
    let mut per_example = Vec::with_capacity(n);
    for (i, &y) in labels.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let row = logits.row(i);
        per_example.push(w * row_cross_entropy(row, y));
        let g = grad.row_mut(i);
        softmax_row(row, g);
        g[y] -= 1.0;
        for v in g.iter_mut() {
            *v *= w * inv_n;
        }
    }
    let loss = per_example.iter().sum::<f64>() * inv_n;
    Ok((LossValue { loss, per_example }, grad))
}
