//! Deterministic synthetic music for tests and desk-scale corpora.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Genre {
    HipHop,
    Instrumental,
    International,
    Pop,
    Rock,
    Classical,
    Orchestral,
}

impl Genre {
    pub const ALL: [Genre; 7] = [
        Genre::HipHop,
        Genre::Instrumental,
        Genre::International,
        Genre::Pop,
        Genre::Rock,
        Genre::Classical,
        Genre::Orchestral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Genre::HipHop => "hip-hop",
            Genre::Instrumental => "instrumental",
            Genre::International => "international",
            Genre::Pop => "pop",
            Genre::Rock => "rock",
            Genre::Classical => "classical",
            Genre::Orchestral => "orchestral",
        }
    }

    /// (tempo bpm, harmonic count, harmonic roll-off, drum level)
    fn style(self) -> (f64, usize, f64, f64) {
        match self {
            Genre::HipHop => (90.0, 4, 0.5, 1.0),
            Genre::Instrumental => (84.0, 9, 0.7, 0.1),
            Genre::International => (104.0, 7, 0.65, 0.4),
            Genre::Pop => (112.0, 6, 0.6, 0.5),
            Genre::Rock => (128.0, 10, 0.8, 0.8),
            Genre::Classical => (72.0, 8, 0.55, 0.0),
            Genre::Orchestral => (66.0, 12, 0.75, 0.05),
        }
    }
}

impl std::str::FromStr for Genre {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Genre::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| format!("unknown genre `{s}`"))
    }
}

/// Pure sine of the given peak amplitude.
pub fn tone<T: Scalar>(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Waveform<T> {
    let fs = f64::from(sample_rate);
    let s = (0..len).map(|n| T::of(amplitude * (std::f64::consts::TAU * freq * n as f64 / fs).sin())).collect();
    Waveform::new(s, sample_rate).expect("tone parameters are valid")
}

const MAJOR: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

fn midi_hz(note: i32) -> f64 {
    440.0 * 2f64.powf(f64::from(note - 69) / 12.0)
}

/// A short polyphonic clip: chord pad, melody and (genre-dependent) drums,
/// normalized to an RMS of 0.1.
pub fn music_clip<T: Scalar>(genre: Genre, seconds: f64, sample_rate: u32, seed: u64) -> Waveform<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = f64::from(sample_rate);
    let len = ((seconds * fs).round() as usize).max(1);
    let (bpm, harmonics, rolloff, drums) = genre.style();
    let bpm = bpm * rng.gen_range(0.9..1.1);
    let beat = (60.0 / bpm * fs) as usize;
    let root = 48 + rng.gen_range(0..12);
    let mut out = vec![0.0f64; len];

    let voice = |out: &mut [f64], start: usize, dur: usize, f0: f64, amp: f64, bright: f64| {
        let end = (start + dur).min(out.len());
        for n in start..end {
            let t = (n - start) as f64 / fs;
            let env = (t / 0.01).min(1.0) * (-3.0 * t / (dur as f64 / fs)).exp();
            let mut v = 0.0;
            for h in 1..=harmonics {
                let f = f0 * h as f64;
                if f >= fs / 2.0 {
                    break;
                }
                v += bright.powi(h as i32 - 1) * (std::f64::consts::TAU * f * t).sin();
            }
            out[n] += amp * env * v;
        }
    };

    let mut pos = 0usize;
    let mut bar = 0usize;
    while pos < len {
        let degree = [0usize, 5, 3, 4][bar % 4];
        for k in [0usize, 2, 4] {
            let st = MAJOR[(degree + k) % 7] + 12 * ((degree + k) / 7) as i32;
            voice(&mut out, pos, 4 * beat, midi_hz(root + st), 0.15, rolloff * 0.8);
        }
        for b in 0..4 {
            let start = pos + b * beat;
            if rng.gen_bool(0.8) {
                let st = MAJOR[rng.gen_range(0..7)] + 12 * rng.gen_range(1..3);
                let dur = beat * rng.gen_range(1..3) / 2 + beat / 2;
                voice(&mut out, start, dur, midi_hz(root + st), 0.3, rolloff);
            }
            if drums > 0.0 && start < len {
                let hit = (0.06 * fs) as usize;
                for n in start..(start + hit).min(len) {
                    let t = (n - start) as f64 / fs;
                    let kick = (std::f64::consts::TAU * (60.0 + 80.0 * (-t * 40.0).exp()) * t).sin();
                    let noise = if b % 2 == 1 { rng.gen_range(-1.0..1.0) * 0.6 } else { 0.0 };
                    out[n] += drums * (-t * 30.0).exp() * (kick + noise) * 0.5;
                }
            }
        }
        pos += 4 * beat;
        bar += 1;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    let k = if rms > 0.0 { 0.1 / rms } else { 1.0 };
    Waveform::new(out.into_iter().map(|v| T::of(v * k)).collect(), sample_rate).expect("finite synthesis")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clips_are_deterministic_and_normalized() {
        for g in Genre::ALL {
            let a = music_clip::<f64>(g, 0.5, 16_000, 3);
            assert_eq!(a, music_clip::<f64>(g, 0.5, 16_000, 3));
            assert_eq!(a.len(), 8000);
            assert!((a.rms() - 0.1).abs() < 1e-9);
            assert_eq!(g.name().parse::<Genre>().unwrap(), g);
        }
        assert_ne!(music_clip::<f64>(Genre::Pop, 0.5, 16_000, 3), music_clip::<f64>(Genre::Pop, 0.5, 16_000, 4));
    }
}
