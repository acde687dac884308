//! Magnitude spectrogram and log-mel filterbank front ends.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::matrix::FeatureMatrix;
use crate::autodiff::Mat;
use crate::dsp::{Waveform, TARGET_RATE};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SPEC_WINDOW: usize = 512;
pub const SPEC_HOP: usize = 256;
pub const SPEC_BINS: usize = SPEC_WINDOW / 2 + 1;

pub const FBANK_WINDOW: usize = 400;
pub const FBANK_HOP: usize = 160;
pub const FBANK_FFT: usize = 512;
pub const DEFAULT_MEL_BINS: usize = 64;
/// Energies are floored here before the logarithm.
pub const LOG_FLOOR: f64 = 1.192_092_9e-7;

fn hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / n as f64).cos()).collect()
}

pub fn frame_count(len: usize, window: usize, hop: usize) -> Option<usize> {
    (len >= window).then(|| (len - window) / hop + 1)
}

fn stft_power<T: Scalar>(x: &[T], window: usize, hop: usize, nfft: usize, magnitude: bool) -> Result<Mat<f64>> {
    let frames = frame_count(x.len(), window, hop).ok_or(Error::TooShort { needed: window, got: x.len() })?;
    let win = hamming(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let bins = nfft / 2 + 1;
    let mut out = Mat::zeros((frames, bins));
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for t in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (n, w) in win.iter().enumerate() {
            buf[n] = Complex::new(x[t * hop + n].to_f64_lossy() * w, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            out[[t, k]] = if magnitude { buf[k].norm() } else { buf[k].norm_sqr() };
        }
    }
    Ok(out)
}

/// 512-point Hamming-window magnitude spectrogram, hop 256: `T × 257`.
pub fn spectrogram<T: Scalar>(w: &Waveform<T>) -> Result<FeatureMatrix<T>> {
    w.require_rate(TARGET_RATE)?;
    let m = stft_power(w.samples(), SPEC_WINDOW, SPEC_HOP, SPEC_WINDOW, true)?;
    FeatureMatrix::new(m.mapv(T::of), f64::from(TARGET_RATE) / SPEC_HOP as f64)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Triangular HTK-mel filters, `mel_bins × (nfft/2 + 1)`.
pub fn mel_filters(mel_bins: usize, nfft: usize, fs: f64, low: f64, high: f64) -> Mat<f64> {
    let bins = nfft / 2 + 1;
    let (ml, mh) = (hz_to_mel(low), hz_to_mel(high));
    let edges: Vec<f64> = (0..mel_bins + 2).map(|i| ml + (mh - ml) * i as f64 / (mel_bins + 1) as f64).collect();
    let mut fb = Mat::zeros((mel_bins, bins));
    for m in 0..mel_bins {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let mel = hz_to_mel(k as f64 * fs / nfft as f64);
            let v = if mel > l && mel <= c {
                (mel - l) / (c - l)
            } else if mel > c && mel < r {
                (r - mel) / (r - c)
            } else {
                0.0
            };
            fb[[m, k]] = v;
        }
    }
    fb
}

/// Un-normalized log-mel energies: 25 ms Hamming window, 10 ms hop.
pub fn log_mel<T: Scalar>(w: &Waveform<T>, mel_bins: usize) -> Result<Mat<f64>> {
    w.require_rate(TARGET_RATE)?;
    if mel_bins == 0 {
        return Err(Error::InvalidConfig("mel_bins must be positive".into()));
    }
    let fs = f64::from(TARGET_RATE);
    let power = stft_power(w.samples(), FBANK_WINDOW, FBANK_HOP, FBANK_FFT, false)?;
    let fb = mel_filters(mel_bins, FBANK_FFT, fs, 20.0, fs / 2.0);
    Ok(power.dot(&fb.t()).mapv(|e| e.max(LOG_FLOOR).ln()))
}

/// Per-bin mean/variance normalization over time; constant bins map to 0.
pub fn cmvn(m: &Mat<f64>) -> Mat<f64> {
    let t = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.columns_mut() {
        let mean = col.sum() / t;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 1e-12 { (v - mean) / sd } else { 0.0 });
    }
    out
}

/// Encoder pre-processing: per-clip normalized log-mel filterbank.
pub fn prep_fbank<T: Scalar>(w: &Waveform<T>, mel_bins: usize) -> Result<FeatureMatrix<T>> {
    let m = cmvn(&log_mel(w, mel_bins)?);
    FeatureMatrix::new(m.mapv(T::of), f64::from(TARGET_RATE) / FBANK_HOP as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth;

    #[test]
    fn spectrogram_shape_and_peak_bin() {
        let w = synth::tone::<f64>(1000.0, 1.0, 16_000, 16_000);
        let s = spectrogram(&w).unwrap();
        assert_eq!((s.frames(), s.dim()), (61, 257));
        for row in s.data().rows() {
            let arg = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(arg, 32);
        }
        let silent = Waveform::new(vec![0.0f64; 2000], 16_000).unwrap();
        assert!(spectrogram(&silent).unwrap().data().iter().all(|&v| v == 0.0));
        let short = Waveform::new(vec![0.1f64; 500], 16_000).unwrap();
        assert!(matches!(spectrogram(&short), Err(Error::TooShort { .. })));
    }

    #[test]
    fn fbank_frames_and_normalization() {
        let w = synth::music_clip::<f64>(synth::Genre::Pop, 1.0, 16_000, 2);
        let f = prep_fbank(&w, 64).unwrap();
        assert_eq!((f.frames(), f.dim()), (98, 64));
        let raw = log_mel(&w, 64).unwrap();
        let loud = log_mel(&w.scaled(2.0), 64).unwrap();
        for (a, b) in raw.iter().zip(loud.iter()) {
            if *a > LOG_FLOOR.ln() + 1.0 {
                assert!((b - a - 4f64.ln()).abs() < 1e-9);
            }
        }
        let f2 = prep_fbank(&w.scaled(2.0), 64).unwrap();
        for (a, b) in f.data().iter().zip(f2.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn silent_fbank_is_floor_then_zero() {
        let w = Waveform::new(vec![0.0f64; 4000], 16_000).unwrap();
        assert!(log_mel(&w, 64).unwrap().iter().all(|&v| v == LOG_FLOOR.ln()));
        assert!(prep_fbank(&w, 64).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
