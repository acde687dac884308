//! Mono WAV reading (16-bit PCM or 32-bit float, resampled to 16 kHz) and writing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fir;
use super::waveform::{Waveform, TARGET_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFormat {
    /// 16-bit PCM; samples outside [-1, 1] are rejected.
    #[default]
    Pcm16,
    /// 32-bit IEEE float; keeps levels above full scale.
    Float32,
}

/// Reads a WAV file, averages channels to mono and resamples 32 kHz input to 16 kHz.
pub fn read<T: Scalar>(path: impl AsRef<Path>) -> Result<Waveform<T>> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = f64::from(1u32 << (spec.bits_per_sample - 1));
            reader.samples::<i32>().map(|s| s.map(|v| f64::from(v) / full)).collect::<Result<_, _>>()?
        }
    };
    let ch = usize::from(spec.channels.max(1));
    let mono: Vec<f64> = raw.chunks(ch).map(|c| c.iter().sum::<f64>() / ch as f64).collect();
    let w = Waveform::new(mono.into_iter().map(T::of).collect(), spec.sample_rate)?;
    Ok(to_target_rate(&w))
}

/// Halves 32 kHz input to 16 kHz with an anti-aliasing low-pass.
pub fn to_target_rate<T: Scalar>(w: &Waveform<T>) -> Waveform<T> {
    if w.sample_rate() == TARGET_RATE {
        return w.clone();
    }
    let fs = f64::from(w.sample_rate());
    let h: Vec<T> = fir::design(fir::DEFAULT_TAPS, fs, |f| if f <= 7000.0 { 1.0 } else if f >= 8000.0 { 0.0 } else { (8000.0 - f) / 1000.0 });
    let y = fir::filter_zero_phase(w.samples(), &h);
    let step = (w.sample_rate() / TARGET_RATE) as usize;
    let s: Vec<T> = y.into_iter().step_by(step).collect();
    Waveform::new(s, TARGET_RATE).expect("decimated signal stays valid")
}

pub fn write<T: Scalar>(path: impl AsRef<Path>, w: &Waveform<T>, format: SampleFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    if format == SampleFormat::Pcm16 && w.peak() > T::one() {
        return Err(Error::OutOfRange(format!("peak {} exceeds 16-bit full scale", w.peak())));
    }
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &v in w.samples() {
        match format {
            SampleFormat::Pcm16 => writer.write_sample((v.to_f64_lossy() * 32767.0).round() as i16)?,
            SampleFormat::Float32 => writer.write_sample(v.to_f64_lossy() as f32)?,
        }
    }
    writer.finalize()?;
    Ok(())
}
