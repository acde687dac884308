//! Quality labels: imported scores or the built-in intrusive proxy.

use std::collections::HashMap;

use anyhow::{anyhow, bail, Context, Result};
use haaqi::audiogram::{apply_prescription, nal_r_gains};
use haaqi::dsp::fir::{design, filter_zero_phase};
use haaqi::dsp::{wav, Waveform, TARGET_RATE};
use serde::{Deserialize, Serialize};

use crate::manifest::{Manifest, ManifestRow};
use crate::parallel::map_ordered;

/// Band edges of the proxy's analysis filterbank.
pub const PROXY_BAND_EDGES_HZ: [f64; 8] = [50.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 6000.0, 7900.0];
const PROXY_TAPS: usize = 511;
const ENV_FRAME: usize = 256;
const ENV_HOP: usize = 128;
/// Level mismatch (dB) that scales a band's similarity by `1/e`.
const LEVEL_SCALE_DB: f64 = 20.0;
const LOGISTIC_SLOPE: f64 = 8.0;
const LOGISTIC_MID: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    CsvImport,
    ProxyOracle,
}

/// Frequency-weighted envelope correlation mapped through a logistic. An
/// identical pair scores exactly 1. Not a HAAQI implementation.
#[derive(Clone, Debug)]
pub struct ProxyOracle {
    filters: Vec<Vec<f64>>,
}

impl Default for ProxyOracle {
    fn default() -> Self {
        let fs = f64::from(TARGET_RATE);
        let filters = PROXY_BAND_EDGES_HZ
            .windows(2)
            .map(|e| {
                let (lo, hi) = (e[0], e[1]);
                design(PROXY_TAPS, fs, move |f| if (lo..hi).contains(&f) { 1.0 } else { 0.0 })
            })
            .collect();
        Self { filters }
    }
}

fn envelope(x: &[f64]) -> Vec<f64> {
    if x.len() < ENV_FRAME {
        let p = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
        return vec![p.sqrt().cbrt()];
    }
    (0..=(x.len() - ENV_FRAME) / ENV_HOP)
        .map(|i| {
            let f = &x[i * ENV_HOP..i * ENV_HOP + ENV_FRAME];
            (f.iter().map(|v| v * v).sum::<f64>() / ENV_FRAME as f64).sqrt().cbrt()
        })
        .collect()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-LOGISTIC_SLOPE * (x - LOGISTIC_MID)).exp())
}

impl ProxyOracle {
    /// Score of `processed` against `reference` (both 16 kHz, same length).
    pub fn score(&self, processed: &Waveform<f64>, reference: &Waveform<f64>) -> haaqi::Result<f64> {
        processed.require_rate(TARGET_RATE)?;
        reference.require_rate(TARGET_RATE)?;
        if processed.len() != reference.len() {
            return Err(haaqi::Error::LengthMismatch { left: processed.len(), right: reference.len() });
        }
        let mut total = 0.0;
        for h in &self.filters {
            let p = filter_zero_phase(processed.samples(), h);
            let r = filter_zero_phase(reference.samples(), h);
            let (ep, er) = (envelope(&p), envelope(&r));
            let corr = correlation(&ep, &er).max(0.0);
            let pp = p.iter().map(|v| v * v).sum::<f64>();
            let pr = r.iter().map(|v| v * v).sum::<f64>();
            let level = if pp == pr {
                1.0
            } else if pp == 0.0 || pr == 0.0 {
                0.0
            } else {
                (-(10.0 * (pp / pr).log10()).abs() / LEVEL_SCALE_DB).exp()
            };
            total += corr * level;
        }
        let c = total / self.filters.len() as f64;
        Ok((logistic(c) / logistic(1.0)).clamp(0.0, 1.0))
    }

    /// Reference is the clean clip through the listener's prescription.
    pub fn score_row(&self, m: &Manifest, row: &ManifestRow) -> Result<f64> {
        let processed: Waveform<f64> = wav::read(m.resolve(&row.audio_path))
            .with_context(|| format!("reading {}", row.audio_path.display()))?;
        let clean: Waveform<f64> = wav::read(m.resolve(&row.clean_path))
            .with_context(|| format!("reading {}", row.clean_path.display()))?;
        let reference = apply_prescription(&clean, &nal_r_gains(m.audiograms.get(&row.audiogram_id)?))?;
        Ok(self.score(&processed, &reference)?)
    }
}

/// Returns a copy of `m` with every row scored.
pub fn label_scores(m: &Manifest, provider: Provider, scores: Option<&HashMap<String, f64>>, jobs: usize) -> Result<Manifest> {
    let mut out = m.clone();
    match provider {
        Provider::CsvImport => {
            let scores = scores.ok_or_else(|| anyhow!("csv-import needs a scores file"))?;
            let missing: Vec<&str> = m.rows.iter().filter(|r| !scores.contains_key(&r.clip_id)).map(|r| r.clip_id.as_str()).collect();
            if !missing.is_empty() {
                bail!("{} rows have no score (first: {})", missing.len(), missing[0]);
            }
            for r in &mut out.rows {
                let s = scores[&r.clip_id];
                if !(0.0..=1.0).contains(&s) {
                    bail!("score {s} for {} outside [0, 1]", r.clip_id);
                }
                r.true_score = Some(s);
            }
        }
        Provider::ProxyOracle => {
            let oracle = ProxyOracle::default();
            let results = map_ordered(&m.rows, jobs, |r| oracle.score_row(m, r));
            for (r, s) in out.rows.iter_mut().zip(results) {
                r.true_score = Some(s?.clamp(0.0, 1.0));
            }
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use haaqi::dsp::synth::{music_clip, Genre};
    use haaqi::dsp::{add_noise, linear_filter, FilterSpec, NoiseKind};

    #[test]
    fn identical_signals_score_one() {
        let w = music_clip::<f64>(Genre::Rock, 0.5, 16_000, 3);
        assert_eq!(ProxyOracle::default().score(&w, &w).unwrap(), 1.0);
    }

    #[test]
    fn degradations_lower_the_score() {
        let o = ProxyOracle::default();
        let w = music_clip::<f64>(Genre::Classical, 1.0, 16_000, 4);
        let noisy = add_noise(&w, NoiseKind::Ltass, 0.0, 1).unwrap();
        let lp = linear_filter(&w, &FilterSpec::LowPass { fc: 1000.0, order: 4 }).unwrap();
        for x in [noisy, lp] {
            let s = o.score(&x, &w).unwrap();
            assert!((0.0..1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let a = music_clip::<f64>(Genre::Pop, 0.5, 16_000, 1);
        let b = music_clip::<f64>(Genre::Pop, 0.25, 16_000, 1);
        assert!(ProxyOracle::default().score(&a, &b).is_err());
    }
}
