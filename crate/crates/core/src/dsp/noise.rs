//! Stationary speech-shaped noise, synthetic babble and SNR-targeted mixing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::waveform::{power, Waveform};
use crate::error::{Error, Result};
use crate::nn::derive_seed;
use crate::scalar::Scalar;

/// Third-octave band centres of the speech spectrum table.
pub const LTASS_BANDS_HZ: [f64; 18] = [
    160.0, 200.0, 250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0, 1250.0, 1600.0, 2000.0, 2500.0, 3150.0, 4000.0,
    5000.0, 6300.0, 8000.0,
];

/// Standard speech spectrum level (dB/Hz) at normal vocal effort, ANSI S3.5-1997.
pub const LTASS_SPECTRUM_LEVEL_DB: [f64; 18] = [
    32.41, 34.48, 34.75, 33.98, 34.59, 34.27, 32.06, 28.30, 25.01, 23.00, 20.15, 17.32, 13.18, 11.55, 9.33, 5.31,
    2.59, 1.13,
];

/// Number of talkers summed into synthetic babble.
pub const BABBLE_TALKERS: usize = 6;
/// Syllabic modulation rate of each babble stream.
pub const BABBLE_MOD_HZ: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Ltass,
    Babble,
}

fn ltass_level_db(f: f64) -> f64 {
    let first = LTASS_BANDS_HZ[0];
    let last = LTASS_BANDS_HZ[LTASS_BANDS_HZ.len() - 1];
    if f <= first {
        return LTASS_SPECTRUM_LEVEL_DB[0];
    }
    if f >= last {
        return LTASS_SPECTRUM_LEVEL_DB[LTASS_SPECTRUM_LEVEL_DB.len() - 1];
    }
    let i = LTASS_BANDS_HZ.iter().position(|&b| b > f).unwrap();
    let (f0, f1) = (LTASS_BANDS_HZ[i - 1].ln(), LTASS_BANDS_HZ[i].ln());
    let t = (f.ln() - f0) / (f1 - f0);
    LTASS_SPECTRUM_LEVEL_DB[i - 1] * (1.0 - t) + LTASS_SPECTRUM_LEVEL_DB[i] * t
}

/// Gaussian white noise shaped in the frequency domain by the speech spectrum.
pub fn ltass_noise<T: Scalar>(len: usize, sample_rate: u32, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> =
        (0..len).map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let fs = f64::from(sample_rate);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= len / 2 { k } else { len - k };
        let f = bin as f64 * fs / len as f64;
        let gain = if bin == 0 { 0.0 } else { 10f64.powf(ltass_level_db(f) / 20.0) };
        *c *= gain;
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let r = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt().max(f64::MIN_POSITIVE);
    out.into_iter().map(|v| T::of(v / r)).collect()
}

/// Sum of [`BABBLE_TALKERS`] independent speech-shaped streams, each
/// amplitude-modulated at [`BABBLE_MOD_HZ`] with a random phase.
pub fn babble<T: Scalar>(len: usize, sample_rate: u32, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = Uniform::new(0.0, std::f64::consts::TAU);
    let fs = f64::from(sample_rate);
    let mut acc = vec![0.0f64; len];
    for talker in 0..BABBLE_TALKERS {
        let stream: Vec<f64> = ltass_noise(len, sample_rate, derive_seed(seed, &format!("talker{talker}")));
        let phi = phase.sample(&mut rng);
        for (n, (a, s)) in acc.iter_mut().zip(stream).enumerate() {
            let m = 0.5 * (1.0 + (std::f64::consts::TAU * BABBLE_MOD_HZ * n as f64 / fs + phi).sin());
            *a += s * m;
        }
    }
    let r = (acc.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt().max(f64::MIN_POSITIVE);
    acc.into_iter().map(|v| T::of(v / r)).collect()
}

/// Noise of the requested kind scaled so that `10·log10(P_signal / P_noise)`
/// equals `snr_db` exactly.
pub fn scaled_noise<T: Scalar>(w: &Waveform<T>, kind: NoiseKind, snr_db: f64, seed: u64) -> Result<Vec<T>> {
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("snr_db".into()));
    }
    let ps = power(w.samples()).to_f64_lossy();
    if ps <= 0.0 {
        return Err(Error::SilentInput);
    }
    let noise: Vec<f64> = match kind {
        NoiseKind::Ltass => ltass_noise(w.len(), w.sample_rate(), seed),
        NoiseKind::Babble => babble(w.len(), w.sample_rate(), seed),
    };
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let target = ps / 10f64.powf(snr_db / 10.0);
    let k = (target / pn).sqrt();
    Ok(noise.into_iter().map(|v| T::of(v * k)).collect())
}

/// Adds noise of `kind` at the requested SNR.
pub fn add_noise<T: Scalar>(w: &Waveform<T>, kind: NoiseKind, snr_db: f64, seed: u64) -> Result<Waveform<T>> {
    let noise = scaled_noise(w, kind, snr_db, seed)?;
    Ok(w.with_samples(w.samples().iter().zip(noise).map(|(&s, n)| s + n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth;

    fn snr_of(clean: &[f64], mix: &[f64]) -> f64 {
        let noise: Vec<f64> = mix.iter().zip(clean).map(|(m, c)| m - c).collect();
        10.0 * (power(clean) / power(&noise)).log10()
    }

    #[test]
    fn zero_db_noise_matches_signal_rms() {
        let w = synth::tone::<f64>(440.0, 0.3, 16_000, 16_000);
        let mix = add_noise(&w, NoiseKind::Ltass, 0.0, 1).unwrap();
        assert!(snr_of(w.samples(), mix.samples()).abs() < 0.1);
    }

    #[test]
    fn snr_targets_hold_across_range() {
        let w = synth::music_clip::<f64>(synth::Genre::Pop, 1.0, 16_000, 11);
        for snr in (-10..=30).step_by(5) {
            for kind in [NoiseKind::Ltass, NoiseKind::Babble] {
                let mix = add_noise(&w, kind, f64::from(snr), 5).unwrap();
                let got = snr_of(w.samples(), mix.samples());
                assert!((got - f64::from(snr)).abs() < 0.1, "{kind:?} {snr}: {got}");
            }
        }
    }

    #[test]
    fn silent_input_is_rejected() {
        let w = Waveform::new(vec![0.0f64; 100], 16_000).unwrap();
        assert!(matches!(add_noise(&w, NoiseKind::Ltass, 0.0, 1), Err(Error::SilentInput)));
    }

    #[test]
    fn ltass_has_speech_like_tilt() {
        let n: Vec<f64> = ltass_noise(1 << 15, 16_000, 3);
        let fs = 16_000.0;
        let low: Vec<f64> = crate::dsp::fir::filter_zero_phase(&n, &crate::dsp::fir::design(511, fs, |f| if (400.0..=600.0).contains(&f) { 1.0 } else { 0.0 }));
        let high: Vec<f64> = crate::dsp::fir::filter_zero_phase(&n, &crate::dsp::fir::design(511, fs, |f| if (3500.0..=4500.0).contains(&f) { 1.0 } else { 0.0 }));
        // spectrum level difference 500 Hz vs 4 kHz is ~25 dB/Hz; band widths differ by 5x (+7 dB)
        let diff = 10.0 * (power(&low) / power(&high)).log10();
        assert!((diff - (34.27 - 9.33 - 10.0 * 5f64.log10())).abs() < 2.0, "{diff}");
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let a: Vec<f64> = babble(4000, 16_000, 9);
        let b: Vec<f64> = babble(4000, 16_000, 9);
        let c: Vec<f64> = babble(4000, 16_000, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
