//! Turning waveforms into predictor inputs.

use crate::autodiff::Mat;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::features::{prep_fbank, spectrogram, Encoder};
use crate::scalar::Scalar;

use super::model::{Acoustic, ClipInput, FeatureKind};

/// `ln(1 + |X|)` spectrogram frames.
pub fn spectrogram_frames<T: Scalar>(w: &Waveform<T>) -> Result<Mat<T>> {
    Ok(spectrogram(w)?.into_data().mapv(|v| v.ln_1p()))
}

/// Frozen encoder layer outputs for `w`.
pub fn encoder_layers<T: Scalar>(enc: &Encoder<T>, w: &Waveform<T>) -> Result<Vec<Mat<T>>> {
    let fb = prep_fbank(w, enc.config().mel_bins)?;
    Ok(enc.layer_outputs(&fb)?.into_vec())
}

/// Acoustic input of the kind the predictor expects.
pub fn acoustic_for<T: Scalar>(kind: FeatureKind, enc: Option<&Encoder<T>>, w: &Waveform<T>) -> Result<Acoustic<T>> {
    if kind.uses_encoder() {
        let enc = enc.ok_or_else(|| Error::InvalidConfig(format!("{kind:?} features need an encoder")))?;
        Ok(Acoustic::Layers(encoder_layers(enc, w)?))
    } else {
        Ok(Acoustic::Frames(spectrogram_frames(w)?))
    }
}

pub fn clip_input<T: Scalar>(
    kind: FeatureKind,
    enc: Option<&Encoder<T>>,
    w: &Waveform<T>,
    hearing_loss: [f64; 8],
) -> Result<ClipInput<T>> {
    Ok(ClipInput { acoustic: acoustic_for(kind, enc, w)?, hearing_loss })
}
