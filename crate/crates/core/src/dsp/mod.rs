//! Signal model and the degradation bank: noise, nonlinear processing,
//! linear filtering, level measurement and WAV I/O.

mod condition;
pub mod fir;
mod noise;
mod nonlinear;
mod spl;
mod specsub;
pub mod synth;
pub mod wav;
mod wdrc;
mod filter;
mod waveform;

pub use condition::{apply_condition, stage_seed, ConditionBank, ConditionGroup, ProcessingCondition, Stage};
pub use filter::{linear_filter, FilterSpec, Peak};
pub use noise::{add_noise, babble, ltass_noise, scaled_noise, NoiseKind, LTASS_BANDS_HZ, LTASS_SPECTRUM_LEVEL_DB};
pub use nonlinear::{clip_abs, peak_clip, quantize};
pub use specsub::{spectral_subtract, spectral_subtract_reference, NoiseEstimate, ReferenceMode, SpecSubConfig};
pub use spl::{adjust_spl, measure_spl, SplReading, RMS_REF, SPL_REF_DB};
pub use waveform::{Waveform, SUPPORTED_RATES, TARGET_RATE};
pub use wdrc::{wdrc, WdrcConfig};
