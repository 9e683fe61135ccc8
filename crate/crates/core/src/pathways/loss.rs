use crate::error::Result;
use crate::grid::ProbMap;

/// Predictions are clamped to `[PROB_EPS, 1 - PROB_EPS]` inside the loss.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Summed soft-target cross-entropy and its gradient with respect to the
/// logits (`p - t` per pixel).
pub fn bce_loss_and_grad(pred: &ProbMap, target: &ProbMap) -> Result<(f64, Vec<f64>)> {
    target.ensure_dims(pred.dims())?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let pc = clamp_prob(p);
        loss -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        grad.push(pc - t);
    }
    Ok((loss, grad))
}
