//! Multi-channel wide dynamic range compression.

use serde::{Deserialize, Serialize};

use super::fir;
use super::spl::SPL_REF_DB;
use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WdrcConfig {
    pub channels: usize,
    pub ratio: f64,
    pub knee_db: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub taps: usize,
}

impl Default for WdrcConfig {
    fn default() -> Self {
        Self { channels: 6, ratio: 3.0, knee_db: 45.0, attack_ms: 5.0, release_ms: 50.0, taps: fir::DEFAULT_TAPS }
    }
}

impl WdrcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("wdrc: {m}")));
        if self.channels == 0 {
            return bad("channels must be >= 1");
        }
        if !(self.ratio >= 1.0) || !self.ratio.is_finite() {
            return bad("ratio must be >= 1");
        }
        if !(self.attack_ms > 0.0 && self.release_ms > 0.0) {
            return bad("attack and release must be positive");
        }
        if !self.knee_db.is_finite() {
            return bad("knee must be finite");
        }
        Ok(())
    }

    /// Crossover frequencies: octave spaced, the highest at 4 kHz.
    pub fn crossovers(&self) -> Vec<f64> {
        (0..self.channels.saturating_sub(1))
            .map(|i| 4000.0 / 2f64.powi((self.channels - 2 - i) as i32))
            .collect()
    }

    /// Static input/output curve: gain in dB at input level `level_db`.
    pub fn static_gain_db(&self, level_db: f64) -> f64 {
        if level_db > self.knee_db {
            -(1.0 - 1.0 / self.ratio) * (level_db - self.knee_db)
        } else {
            0.0
        }
    }
}

/// Splits `x` into bands that sum back to `x` exactly.
fn split_bands(x: &[f64], fs: f64, cfg: &WdrcConfig) -> Vec<Vec<f64>> {
    let edges = cfg.crossovers();
    let mut prev: Vec<f64> = vec![0.0; x.len()];
    let mut bands = Vec::with_capacity(cfg.channels);
    for fc in edges {
        let h: Vec<f64> = fir::design(cfg.taps, fs, |f| if f <= fc { 1.0 } else { 0.0 });
        let low = fir::filter_zero_phase(x, &h);
        bands.push(low.iter().zip(&prev).map(|(l, p)| l - p).collect());
        prev = low;
    }
    bands.push(x.iter().zip(&prev).map(|(v, p)| v - p).collect());
    bands
}

fn coeff(ms: f64, fs: f64) -> f64 {
    (-1000.0 / (ms * fs)).exp()
}

fn compress_band(band: &mut [f64], fs: f64, cfg: &WdrcConfig) {
    let a_det = coeff(cfg.attack_ms, fs);
    let a_att = coeff(cfg.attack_ms, fs);
    let a_rel = coeff(cfg.release_ms, fs);
    let warm = ((cfg.attack_ms * fs / 1000.0) as usize).clamp(1, band.len());
    let mut p = band[..warm].iter().map(|v| v * v).sum::<f64>() / warm as f64;
    let level = |p: f64| SPL_REF_DB + 10.0 * p.max(1e-20).log10();
    let mut g = cfg.static_gain_db(level(p));
    for v in band.iter_mut() {
        p = a_det * p + (1.0 - a_det) * *v * *v;
        let target = cfg.static_gain_db(level(p));
        let a = if target < g { a_att } else { a_rel };
        g = a * g + (1.0 - a) * target;
        *v *= 10f64.powf(g / 20.0);
    }
}

/// Band-split compression with a smoothed power detector per channel.
///
/// Level is measured on the same scale as [`super::measure_spl`]; gain is
/// smoothed in dB with the attack constant when falling and the release
/// constant when rising.
pub fn wdrc<T: Scalar>(w: &Waveform<T>, cfg: &WdrcConfig) -> Result<Waveform<T>> {
    cfg.validate()?;
    let fs = f64::from(w.sample_rate());
    if cfg.crossovers().last().is_some_and(|&f| f >= fs / 2.0) {
        return Err(Error::InvalidConfig("wdrc: crossover above Nyquist".into()));
    }
    let x: Vec<f64> = w.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let mut out = vec![0.0; x.len()];
    for mut band in split_bands(&x, fs, cfg) {
        compress_band(&mut band, fs, cfg);
        for (o, b) in out.iter_mut().zip(band) {
            *o += b;
        }
    }
    Ok(w.with_samples(out.into_iter().map(T::of).collect()))
}
