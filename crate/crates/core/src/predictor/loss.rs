use crate::autodiff::{Graph, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::{QualityPrediction, ScoreNodes};

/// Clip term plus mean frame term, averaged over the batch. `truth[n]` is
/// compared with both the clip score and every frame score of item `n`.
pub fn quality_loss(truth: &[f64], preds: &[QualityPrediction]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if truth.len() != preds.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: preds.len() });
    }
    let mut total = 0.0;
    for (&q_hat, p) in truth.iter().zip(preds) {
        if p.frame_scores.is_empty() {
            return Err(Error::Empty("frame scores"));
        }
        let frame = p.frame_scores.iter().map(|q| (q_hat - q).powi(2)).sum::<f64>() / p.frame_scores.len() as f64;
        total += (q_hat - p.clip_score).powi(2) + frame;
    }
    Ok(total / truth.len() as f64)
}

/// Graph version of [`quality_loss`]; returns a `1 × 1` node.
pub fn quality_loss_graph<T: Scalar>(g: &mut Graph<'_, T>, truth: &[f64], scores: &[ScoreNodes]) -> Result<Node> {
    if truth.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if truth.len() != scores.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: scores.len() });
    }
    let mut terms = Vec::with_capacity(truth.len());
    for (&q_hat, s) in truth.iter().zip(scores) {
        let dc = g.add_scalar(s.clip, T::of(-q_hat));
        let clip = g.square(dc);
        let df = g.add_scalar(s.frames, T::of(-q_hat));
        let sq = g.square(df);
        let frame = g.mean(sq);
        terms.push(g.add(clip, frame));
    }
    let all = g.concat_rows(&terms);
    Ok(g.mean(all))
}
