//! STFT magnitude subtraction with a spectral floor.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Where the noise magnitude estimate comes from when none is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseEstimate {
    /// No subtraction; the output reproduces the input.
    Zeros,
    /// Mean magnitude of the quietest `fraction` of frames.
    LowEnergyFrames { fraction: f64 },
}

/// How a reference noise signal is turned into an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// The reference's own magnitude, frame by frame.
    Framewise,
    /// The reference's mean magnitude, constant over time.
    Average,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecSubConfig {
    pub alpha: f64,
    pub beta: f64,
    pub frame: usize,
    pub hop: usize,
    pub estimate: NoiseEstimate,
}

impl Default for SpecSubConfig {
    fn default() -> Self {
        Self { alpha: 2.0, beta: 0.1, frame: 512, hop: 128, estimate: NoiseEstimate::LowEnergyFrames { fraction: 0.1 } }
    }
}

impl SpecSubConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("spectral subtraction: {m}")));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if self.frame < 2 || self.hop == 0 || self.hop > self.frame / 2 {
            return bad("need frame >= 2 and 0 < hop <= frame/2");
        }
        if let NoiseEstimate::LowEnergyFrames { fraction } = self.estimate {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad("low-energy fraction must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

struct Stft {
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    len: usize,
    padded: usize,
}

impl Stft {
    fn new(len: usize, frame: usize, hop: usize) -> Self {
        let window = (0..frame)
            .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / frame as f64).cos())
            .collect();
        let frames = (len + frame).div_ceil(hop) + 1;
        Self { frame, hop, window, len, padded: (frames - 1) * hop + frame }
    }

    fn frames(&self) -> usize {
        (self.padded - self.frame) / self.hop + 1
    }

    fn analyze(&self, x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Vec<Complex<f64>>> {
        let fft = planner.plan_fft_forward(self.frame);
        let mut buf = vec![0.0; self.padded];
        buf[self.frame..self.frame + x.len().min(self.len)].copy_from_slice(&x[..x.len().min(self.len)]);
        (0..self.frames())
            .map(|t| {
                let mut f: Vec<Complex<f64>> = buf[t * self.hop..t * self.hop + self.frame]
                    .iter()
                    .zip(&self.window)
                    .map(|(v, w)| Complex::new(v * w, 0.0))
                    .collect();
                fft.process(&mut f);
                f
            })
            .collect()
    }

    fn synthesize(&self, spec: Vec<Vec<Complex<f64>>>, planner: &mut FftPlanner<f64>) -> Vec<f64> {
        let ifft = planner.plan_fft_inverse(self.frame);
        let mut out = vec![0.0; self.padded];
        let mut norm = vec![0.0; self.padded];
        let scale = 1.0 / self.frame as f64;
        for (t, mut f) in spec.into_iter().enumerate() {
            ifft.process(&mut f);
            for (n, (c, w)) in f.iter().zip(&self.window).enumerate() {
                out[t * self.hop + n] += c.re * scale * w;
                norm[t * self.hop + n] += w * w;
            }
        }
        out[self.frame..self.frame + self.len]
            .iter()
            .zip(&norm[self.frame..self.frame + self.len])
            .map(|(v, n)| if *n > 1e-12 { v / n } else { 0.0 })
            .collect()
    }
}

fn subtract(spec: &mut [Vec<Complex<f64>>], noise: impl Fn(usize, usize) -> f64, alpha: f64, beta: f64) {
    for (t, frame) in spec.iter_mut().enumerate() {
        for (k, c) in frame.iter_mut().enumerate() {
            let mag = c.norm();
            if mag == 0.0 {
                continue;
            }
            let target = (mag - alpha * noise(t, k)).max(beta * mag);
            *c *= target / mag;
        }
    }
}

fn mean_magnitude<'a>(frames: impl Iterator<Item = &'a Vec<Complex<f64>>>, bins: usize) -> Vec<f64> {
    let mut acc = vec![0.0; bins];
    let mut n = 0usize;
    for f in frames {
        for (a, c) in acc.iter_mut().zip(f) {
            *a += c.norm();
        }
        n += 1;
    }
    acc.iter().map(|v| v / n.max(1) as f64).collect()
}

fn to_f64<T: Scalar>(w: &Waveform<T>) -> Vec<f64> {
    w.samples().iter().map(|v| v.to_f64_lossy()).collect()
}

/// Blind spectral subtraction, estimating noise as configured.
///
/// `|Ŝ| = max(|X| − α·|N̂|, β·|X|)` with the input phase; output length
/// equals input length.
pub fn spectral_subtract<T: Scalar>(w: &Waveform<T>, cfg: &SpecSubConfig) -> Result<Waveform<T>> {
    cfg.validate()?;
    let x = to_f64(w);
    let stft = Stft::new(x.len(), cfg.frame, cfg.hop);
    let mut planner = FftPlanner::new();
    let mut spec = stft.analyze(&x, &mut planner);
    match cfg.estimate {
        NoiseEstimate::Zeros => {}
        NoiseEstimate::LowEnergyFrames { fraction } => {
            let mut energy: Vec<(f64, usize)> =
                spec.iter().enumerate().map(|(t, f)| (f.iter().map(|c| c.norm_sqr()).sum(), t)).collect();
            energy.sort_by(|a, b| a.0.total_cmp(&b.0));
            // padding frames at either end are silent, skip them
            let live: Vec<usize> = energy.iter().filter(|(e, _)| *e > 0.0).map(|&(_, t)| t).collect();
            let take = ((live.len() as f64 * fraction).ceil() as usize).clamp(1, live.len().max(1));
            let est = mean_magnitude(live.iter().take(take).map(|&t| &spec[t]), cfg.frame);
            subtract(&mut spec, |_, k| est[k], cfg.alpha, cfg.beta);
        }
    }
    let y = stft.synthesize(spec, &mut planner);
    Ok(w.with_samples(y.into_iter().map(T::of).collect()))
}

/// Spectral subtraction with the noise estimate taken from a reference noise
/// signal of the same length (an oracle estimate).
pub fn spectral_subtract_reference<T: Scalar>(
    w: &Waveform<T>,
    noise: &[T],
    mode: ReferenceMode,
    cfg: &SpecSubConfig,
) -> Result<Waveform<T>> {
    cfg.validate()?;
    if noise.len() != w.len() {
        return Err(Error::LengthMismatch { left: w.len(), right: noise.len() });
    }
    let x = to_f64(w);
    let n: Vec<f64> = noise.iter().map(|v| v.to_f64_lossy()).collect();
    let stft = Stft::new(x.len(), cfg.frame, cfg.hop);
    let mut planner = FftPlanner::new();
    let mut spec = stft.analyze(&x, &mut planner);
    let nspec = stft.analyze(&n, &mut planner);
    match mode {
        ReferenceMode::Framewise => subtract(&mut spec, |t, k| nspec[t][k].norm(), cfg.alpha, cfg.beta),
        ReferenceMode::Average => {
            let est = mean_magnitude(nspec.iter(), cfg.frame);
            subtract(&mut spec, |_, k| est[k], cfg.alpha, cfg.beta)
        }
    }
    let y = stft.synthesize(spec, &mut planner);
    Ok(w.with_samples(y.into_iter().map(T::of).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::noise::ltass_noise;
    use crate::dsp::waveform::power;
    use crate::dsp::synth;

    fn err_db(a: &[f64], b: &[f64]) -> f64 {
        let e: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        10.0 * (power(&e) / power(b)).log10()
    }

    #[test]
    fn zero_estimate_round_trips() {
        let w = synth::music_clip::<f64>(synth::Genre::Classical, 0.7, 16_000, 4);
        let cfg = SpecSubConfig { estimate: NoiseEstimate::Zeros, ..Default::default() };
        let out = spectral_subtract(&w, &cfg).unwrap();
        assert_eq!(out.len(), w.len());
        assert!(err_db(out.samples(), w.samples()) < -60.0);
        let zeros = vec![0.0; w.len()];
        let out = spectral_subtract_reference(&w, &zeros, ReferenceMode::Framewise, &cfg).unwrap();
        assert!(err_db(out.samples(), w.samples()) < -60.0);
    }

    #[test]
    fn matched_noise_collapses_to_floor() {
        let n: Vec<f64> = ltass_noise(8000, 16_000, 2);
        let w = Waveform::new(n.iter().map(|v| v * 0.1).collect(), 16_000).unwrap();
        let cfg = SpecSubConfig { alpha: 1.0, beta: 0.1, ..Default::default() };
        let out = spectral_subtract_reference(&w, w.samples(), ReferenceMode::Framewise, &cfg).unwrap();
        let ratio = (power(out.samples()) / power(w.samples())).sqrt();
        assert!(ratio <= 0.1 + 1e-6, "{ratio}");
    }

    #[test]
    fn blind_estimate_reduces_noise() {
        let n: Vec<f64> = ltass_noise(16_000, 16_000, 2);
        let w = Waveform::new(n.iter().map(|v| v * 0.1).collect(), 16_000).unwrap();
        let out = spectral_subtract(&w, &SpecSubConfig::default()).unwrap();
        assert_eq!(out.len(), w.len());
        assert!(power(out.samples()) < power(w.samples()));
    }

    #[test]
    fn config_validation() {
        let w = synth::tone::<f64>(500.0, 0.5, 1600, 16_000);
        for cfg in [
            SpecSubConfig { alpha: 0.0, ..Default::default() },
            SpecSubConfig { beta: 1.0, ..Default::default() },
            SpecSubConfig { hop: 400, ..Default::default() },
        ] {
            assert!(spectral_subtract(&w, &cfg).is_err());
        }
    }
}
