//! Linear filtering conditions: Butterworth-shaped low/high/band-pass,
//! spectral tilt and resonance peaks, all realized as linear-phase FIRs.

use serde::{Deserialize, Serialize};

use super::fir;
use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn default_order() -> u32 {
    4
}

/// A resonance peak with a bell-shaped gain in dB.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center_hz: f64,
    pub q: f64,
    pub gain_db: f64,
}

impl Peak {
    pub const fn new(center_hz: f64, q: f64, gain_db: f64) -> Self {
        Self { center_hz, q, gain_db }
    }

    fn gain_db_at(&self, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let d = f / self.center_hz - self.center_hz / f;
        self.gain_db / (1.0 + self.q * self.q * d * d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FilterSpec {
    LowPass {
        fc: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
    HighPass {
        fc: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
    BandPass {
        f1: f64,
        f2: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
    /// Constant slope in dB per octave, 0 dB at 1 kHz.
    Tilt { db_per_octave: f64 },
    Resonance { peak: Peak },
    MultiResonance { peaks: Vec<Peak> },
    MultiResonanceLowPass {
        peaks: Vec<Peak>,
        fc: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
}

/// Frequency below which the tilt curve is held constant.
const TILT_FLOOR_HZ: f64 = 62.5;
const TILT_PIVOT_HZ: f64 = 1000.0;

fn lowpass(f: f64, fc: f64, order: u32) -> f64 {
    1.0 / (1.0 + (f / fc).powi(2 * order as i32)).sqrt()
}

fn highpass(f: f64, fc: f64, order: u32) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + (fc / f).powi(2 * order as i32)).sqrt()
}

fn peaks_gain(peaks: &[Peak], f: f64) -> f64 {
    10f64.powf(peaks.iter().map(|p| p.gain_db_at(f)).sum::<f64>() / 20.0)
}

impl FilterSpec {
    /// Desired linear magnitude at `f` Hz.
    pub fn magnitude(&self, f: f64) -> f64 {
        match self {
            Self::LowPass { fc, order } => lowpass(f, *fc, *order),
            Self::HighPass { fc, order } => highpass(f, *fc, *order),
            Self::BandPass { f1, f2, order } => highpass(f, *f1, *order) * lowpass(f, *f2, *order),
            Self::Tilt { db_per_octave } => {
                10f64.powf(db_per_octave * (f.max(TILT_FLOOR_HZ) / TILT_PIVOT_HZ).log2() / 20.0)
            }
            Self::Resonance { peak } => peaks_gain(std::slice::from_ref(peak), f),
            Self::MultiResonance { peaks } => peaks_gain(peaks, f),
            Self::MultiResonanceLowPass { peaks, fc, order } => peaks_gain(peaks, f) * lowpass(f, *fc, *order),
        }
    }

    fn peaks(&self) -> &[Peak] {
        match self {
            Self::Resonance { peak } => std::slice::from_ref(peak),
            Self::MultiResonance { peaks } | Self::MultiResonanceLowPass { peaks, .. } => peaks,
            _ => &[],
        }
    }

    /// FIR length: the default, or long enough to resolve the narrowest peak.
    pub fn taps(&self, fs: f64) -> usize {
        let narrow = self.peaks().iter().map(|p| p.center_hz / p.q).fold(f64::INFINITY, f64::min);
        let need = if narrow.is_finite() { (8.0 * fs / narrow).ceil() as usize } else { 0 };
        need.max(fir::DEFAULT_TAPS) | 1
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        let nyq = fs / 2.0;
        let check = |f: f64, what: &str| {
            if !(f > 0.0 && f < nyq) {
                Err(Error::OutOfRange(format!("{what} {f} Hz must lie in (0, {nyq}) Hz")))
            } else {
                Ok(())
            }
        };
        let order_ok = |o: u32| {
            if (1..=16).contains(&o) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("filter order {o} not in [1, 16]")))
            }
        };
        match self {
            Self::LowPass { fc, order } | Self::HighPass { fc, order } => {
                check(*fc, "cutoff")?;
                order_ok(*order)?;
            }
            Self::BandPass { f1, f2, order } => {
                check(*f1, "lower cutoff")?;
                check(*f2, "upper cutoff")?;
                order_ok(*order)?;
                if f1 >= f2 {
                    return Err(Error::InvalidConfig(format!("band-pass edges {f1} >= {f2}")));
                }
            }
            Self::Tilt { db_per_octave } => {
                if !db_per_octave.is_finite() {
                    return Err(Error::NonFinite("tilt".into()));
                }
            }
            Self::MultiResonanceLowPass { fc, order, .. } => {
                check(*fc, "cutoff")?;
                order_ok(*order)?;
            }
            Self::Resonance { .. } | Self::MultiResonance { .. } => {}
        }
        for p in self.peaks() {
            check(p.center_hz, "resonance centre")?;
            if !(p.q > 0.0) || !p.gain_db.is_finite() {
                return Err(Error::InvalidConfig(format!("bad resonance {p:?}")));
            }
        }
        Ok(())
    }

    pub fn design<T: Scalar>(&self, fs: f64) -> Result<Vec<T>> {
        self.validate(fs)?;
        Ok(fir::design(self.taps(fs), fs, |f| self.magnitude(f)))
    }
}

/// Applies the zero-phase FIR realization of `spec`.
pub fn linear_filter<T: Scalar>(w: &Waveform<T>, spec: &FilterSpec) -> Result<Waveform<T>> {
    let h: Vec<T> = spec.design(f64::from(w.sample_rate()))?;
    Ok(w.with_samples(fir::filter_zero_phase(w.samples(), &h)))
}
