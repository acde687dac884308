//! Trained models as stored in run directories.

use std::path::Path;

use anyhow::{bail, Context, Result};
use haaqi::autodiff::Mat;
use haaqi::distill::DistilledModel;
use haaqi::dsp::Waveform;
use haaqi::features::Encoder;
use haaqi::predictor::{clip_input, Acoustic, ClipInput, QualityModel, QualityPrediction};

pub const ENCODER_FILE: &str = "encoder.bin";
pub const PREDICTOR_FILE: &str = "predictor.bin";
pub const DISTILLED_FILE: &str = "distilled.bin";

/// Either the full teacher pipeline or a distilled student pipeline.
#[derive(Clone, Debug)]
pub enum Model {
    Teacher { encoder: Option<Encoder<f64>>, quality: QualityModel<f64> },
    Student(DistilledModel<f64>),
}

impl Model {
    /// Loads `distilled.bin` if present, otherwise `predictor.bin` and, when
    /// the predictor needs one, `encoder.bin`.
    pub fn load(dir: &Path) -> Result<Self> {
        let distilled = dir.join(DISTILLED_FILE);
        if distilled.is_file() {
            return Ok(Model::Student(DistilledModel::load(&distilled).with_context(|| format!("loading {}", distilled.display()))?));
        }
        Self::load_teacher(dir)
    }

    pub fn load_teacher(dir: &Path) -> Result<Self> {
        let p = dir.join(PREDICTOR_FILE);
        if !p.is_file() {
            bail!("{} holds neither {DISTILLED_FILE} nor {PREDICTOR_FILE}", dir.display());
        }
        let quality = QualityModel::load(&p).with_context(|| format!("loading {}", p.display()))?;
        let encoder = if quality.config().features.uses_encoder() {
            let e = dir.join(ENCODER_FILE);
            Some(Encoder::load(&e).with_context(|| format!("loading {}", e.display()))?)
        } else {
            None
        };
        Ok(Model::Teacher { encoder, quality })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Teacher { .. } => "teacher",
            Model::Student(_) => "student",
        }
    }

    pub fn quality(&self) -> &QualityModel<f64> {
        match self {
            Model::Teacher { quality, .. } => quality,
            Model::Student(m) => &m.quality,
        }
    }

    /// Encoder outputs (or spectrogram frames): everything before the quality head.
    pub fn features(&self, w: &Waveform<f64>) -> haaqi::Result<Vec<Mat<f64>>> {
        match self {
            Model::Teacher { encoder, quality } => {
                Ok(match clip_input(quality.config().features, encoder.as_ref(), w, [0.0; 8])?.acoustic {
                    Acoustic::Frames(m) => vec![m],
                    Acoustic::Layers(l) => l,
                })
            }
            Model::Student(m) => Ok(vec![m.encode(w)?]),
        }
    }

    /// Prediction from precomputed [`Model::features`].
    pub fn predict_features(&self, feats: &[Mat<f64>], hearing_loss: [f64; 8]) -> haaqi::Result<QualityPrediction> {
        match self {
            Model::Teacher { quality, .. } => {
                let acoustic = if quality.config().features.uses_encoder() {
                    Acoustic::Layers(feats.to_vec())
                } else {
                    Acoustic::Frames(feats[0].clone())
                };
                quality.predict(&ClipInput { acoustic, hearing_loss })
            }
            Model::Student(m) => m.predict_encoded(&feats[0], hearing_loss),
        }
    }

    pub fn predict(&self, w: &Waveform<f64>, hearing_loss: [f64; 8]) -> haaqi::Result<QualityPrediction> {
        self.predict_features(&self.features(w)?, hearing_loss)
    }

    /// Per-head attention maps of the quality head (teacher pipeline only).
    pub fn attention(&self, w: &Waveform<f64>, hearing_loss: [f64; 8]) -> haaqi::Result<Option<Vec<Mat<f64>>>> {
        match self {
            Model::Teacher { encoder, quality } => {
                let input = clip_input(quality.config().features, encoder.as_ref(), w, hearing_loss)?;
                Ok(Some(quality.forward_with_attention(&input)?.1))
            }
            Model::Student(_) => Ok(None),
        }
    }
}
