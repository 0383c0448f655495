use crate::error::{Error, Result};

/// Multi-class cross-entropy over raw scores:
/// `loss = ln Σ_j exp(s_j) − s_gt`, with `∂loss/∂s = softmax(s) − onehot(gt)`.
pub fn softmax_cross_entropy(scores: &[f64], gt_index: usize) -> Result<(f64, Vec<f64>)> {
    if gt_index >= scores.len() {
        return Err(Error::Index(format!(
            "ground truth {gt_index} outside {} scores",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Argument(format!("score {i} is not finite")));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - scores[gt_index];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[gt_index] -= 1.0;
    Ok((loss, grad))
}
