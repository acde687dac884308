//! Acoustic features: spectrogram, log-mel filterbank, the transformer
//! encoder and layer fusion.

pub mod encoder;
mod fusion;
mod matrix;
pub mod spectral;

pub use encoder::{patchify, trunk_param_count, Block, Encoder, EncoderConfig, LayerOutputs, Trunk};
pub use fusion::{adapt, weighted_sum, weighted_sum_graph, window_average, LayerWeights, ADAPTED_DIM};
pub use matrix::FeatureMatrix;
pub use spectral::{log_mel, prep_fbank, spectrogram, DEFAULT_MEL_BINS, SPEC_BINS};
