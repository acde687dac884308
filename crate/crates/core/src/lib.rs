//! Non-intrusive music quality prediction for hearing-aid listeners: signal
//! degradation and prescription, transformer feature extraction, a BLSTM
//! attention quality head, teacher/student distillation and evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common choices.

pub mod audiogram;
pub mod autodiff;
pub mod distill;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod predictor;
pub mod scalar;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Waveform32 = dsp::Waveform<f32>;
pub type Waveform64 = dsp::Waveform<f64>;
pub type Encoder32 = features::Encoder<f32>;
pub type Encoder64 = features::Encoder<f64>;
pub type QualityModel32 = predictor::QualityModel<f32>;
pub type QualityModel64 = predictor::QualityModel<f64>;
pub type Student32 = distill::Student<f32>;
pub type Student64 = distill::Student<f64>;
pub type DistilledModel32 = distill::DistilledModel<f32>;
pub type DistilledModel64 = distill::DistilledModel<f64>;
