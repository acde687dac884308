//! Quality head: BLSTM, FC+ReLU, self-attention, per-frame sigmoid scores
//! pooled by their mean.

mod input;
mod loss;
mod model;
mod train;

use std::io::Write;

pub use crate::autodiff::numeric_gradient;
pub use input::{acoustic_for, clip_input, encoder_layers, spectrogram_frames};
pub use loss::{quality_loss, quality_loss_graph};
pub use model::{
    is_blstm_or_attention, normalize_hearing_loss, Acoustic, ClipInput, FeatureKind, Lstm, PredictorConfig, QualityModel, QualityPrediction,
    ScoreNodes, HL_DIM, HL_SCALE,
};
pub use train::{dataset_loss, predict_all, split_indices, train, train_model, train_step, train_with_validation, Example, TrainConfig, TrainReport};

/// Writes `clip_id,predicted_score,true_score` rows.
pub fn write_predictions<W: Write>(mut w: W, rows: &[(String, f64, f64)]) -> crate::Result<()> {
    writeln!(w, "clip_id,predicted_score,true_score")?;
    for (id, p, t) in rows {
        writeln!(w, "{id},{p},{t}")?;
    }
    Ok(())
}
