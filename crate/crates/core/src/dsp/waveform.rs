use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sample rates accepted on ingest.
pub const SUPPORTED_RATES: [u32; 2] = [16_000, 32_000];
/// Rate every processing stage runs at.
pub const TARGET_RATE: u32 = 16_000;

/// Mono sample sequence with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if !SUPPORTED_RATES.contains(&sample_rate) {
            return Err(Error::SampleRate { expected: TARGET_RATE, got: sample_rate });
        }
        if samples.is_empty() {
            return Err(Error::Empty("waveform"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Same rate, new samples; length must stay non-zero.
    pub fn with_samples(&self, samples: Vec<T>) -> Self {
        debug_assert!(!samples.is_empty());
        Self { samples, sample_rate: self.sample_rate }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, k: T) -> Self {
        self.with_samples(self.samples.iter().map(|&v| v * k).collect())
    }

    pub fn require_rate(&self, rate: u32) -> Result<()> {
        if self.sample_rate != rate {
            return Err(Error::SampleRate { expected: rate, got: self.sample_rate });
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Waveform<U> {
        Waveform { samples: self.samples.iter().map(|v| U::of(v.to_f64_lossy())).collect(), sample_rate: self.sample_rate }
    }
}

pub(crate) fn rms<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let p = x.iter().map(|&v| v * v).sum::<T>() / T::from_usize(x.len()).unwrap();
    p.sqrt()
}

pub(crate) fn power<T: Scalar>(x: &[T]) -> T {
    rms(x).powi(2)
}
