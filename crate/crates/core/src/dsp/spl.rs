use serde::{Deserialize, Serialize};

use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Level assigned to a signal of RMS [`RMS_REF`].
pub const SPL_REF_DB: f64 = 65.0;
pub const RMS_REF: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplReading {
    pub spl_db: f64,
}

/// `65 + 20·log10(rms / 1.0)`.
pub fn measure_spl<T: Scalar>(w: &Waveform<T>) -> Result<SplReading> {
    let rms = w.rms().to_f64_lossy();
    if rms <= 0.0 {
        return Err(Error::SilentInput);
    }
    Ok(SplReading { spl_db: SPL_REF_DB + 20.0 * (rms / RMS_REF).log10() })
}

/// Scales `w` so that its measured level equals `target_db`.
pub fn adjust_spl<T: Scalar>(w: &Waveform<T>, target_db: f64) -> Result<Waveform<T>> {
    if !target_db.is_finite() {
        return Err(Error::NonFinite("target SPL".into()));
    }
    let current = measure_spl(w)?.spl_db;
    let gain = 10f64.powf((target_db - current) / 20.0);
    Ok(w.scaled(T::of(gain)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_levels() {
        let w = Waveform::new(vec![1.0f64, -1.0, 1.0, -1.0], 16_000).unwrap();
        assert_eq!(measure_spl(&w).unwrap().spl_db, 65.0);
        assert!((measure_spl(&w.scaled(0.5)).unwrap().spl_db - 58.9794).abs() < 1e-3);
        assert!((measure_spl(&w.scaled(10.0)).unwrap().spl_db - 85.0).abs() < 1e-9);
    }

    #[test]
    fn adjust_hits_target() {
        let w = Waveform::new((0..1000).map(|i| (i as f64 * 0.05).sin() * 0.2).collect(), 16_000).unwrap();
        for target in [35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 95.0] {
            let out = adjust_spl(&w, target).unwrap();
            assert!((measure_spl(&out).unwrap().spl_db - target).abs() < 0.01);
        }
        let here = measure_spl(&w).unwrap().spl_db;
        let same = adjust_spl(&w, here).unwrap();
        for (a, b) in same.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let up = adjust_spl(&w, here + 20.0).unwrap();
        assert!((up.samples()[10] / w.samples()[10] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn silent_is_an_error() {
        let w = Waveform::new(vec![0.0f64; 10], 16_000).unwrap();
        assert!(matches!(measure_spl(&w), Err(Error::SilentInput)));
        assert!(adjust_spl(&w, 65.0).is_err());
    }
}
