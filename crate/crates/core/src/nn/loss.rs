use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy and its gradient with respect to the probabilities.
pub fn bce_loss(probabilities: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if probabilities.len() != labels.len() {
        return Err(Error::shape("bce_loss", probabilities.len(), labels.len()));
    }
    if probabilities.is_empty() {
        return Err(Error::InvalidArgument("bce_loss on an empty batch".into()));
    }
    let w = vec![1.0 / probabilities.len() as f64; probabilities.len()];
    weighted_bce(probabilities, labels, &w)
}

/// Σ_r w_r · bce(p_r, y_r) and its gradient.
pub(crate) fn weighted_bce(
    probabilities: &[f64],
    labels: &[u8],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probabilities.len());
    for ((&p, &y), &w) in probabilities.iter().zip(labels).zip(weights) {
        if y > 1 {
            return Err(Error::InvalidArgument(format!("label {y} is not binary")));
        }
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let y = f64::from(y);
        loss -= w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        grad.push(-w * (y / p - (1.0 - y) / (1.0 - p)));
    }
    Ok((loss, grad))
}

/// Mean softmax cross-entropy of `logits` (n × k) against `class_ids`, with the
/// gradient w.r.t. the logits: `(softmax − onehot) / n`.
pub fn softmax_ce_loss(logits: &Matrix, class_ids: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if class_ids.len() != n {
        return Err(Error::shape("softmax_ce_loss", n, class_ids.len()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "softmax_ce_loss on an empty batch".into(),
        ));
    }
    if let Some(&bad) = class_ids.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidArgument(format!(
            "class id {bad} out of range for {k} classes"
        )));
    }
    let w = vec![1.0 / n as f64; n];
    Ok(weighted_softmax_ce(logits, class_ids, &w))
}

/// Σ_r w_r · CE(logits_r, c_r) and its gradient; ids must already be in range.
pub(crate) fn weighted_softmax_ce(
    logits: &Matrix,
    class_ids: &[usize],
    weights: &[f64],
) -> (f64, Matrix) {
    let (n, k) = logits.shape();
    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    for (i, (&c, &w)) in class_ids.iter().zip(weights).enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += w * (lse - row[c]);
        let g = grad.row_mut(i);
        for (gj, &z) in g.iter_mut().zip(row) {
            *gj = w * (z - lse).exp();
        }
        g[c] -= w;
    }
    (loss, grad)
}
