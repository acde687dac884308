use super::waveform::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric clipping at `threshold` times the waveform's own peak.
pub fn peak_clip<T: Scalar>(w: &Waveform<T>, threshold: f64) -> Result<Waveform<T>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::OutOfRange(format!("clip threshold {threshold} not in (0, 1]")));
    }
    let level = w.peak() * T::of(threshold);
    Ok(clip_abs(w, level))
}

/// Symmetric clipping at a fixed absolute level.
pub fn clip_abs<T: Scalar>(w: &Waveform<T>, level: T) -> Waveform<T> {
    w.with_samples(w.samples().iter().map(|&v| v.max(-level).min(level)).collect())
}

/// Mid-tread uniform quantizer with `2^(bits-1) - 1` positive levels.
pub fn quantize<T: Scalar>(w: &Waveform<T>, bits: u32) -> Result<Waveform<T>> {
    if !(2..=32).contains(&bits) {
        return Err(Error::OutOfRange(format!("bit depth {bits} not in [2, 32]")));
    }
    let steps = T::of(((1u64 << (bits - 1)) - 1) as f64);
    Ok(w.with_samples(
        w.samples()
            .iter()
            .map(|&v| (v.max(-T::one()).min(T::one()) * steps).round() / steps)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(v: Vec<f64>) -> Waveform<f64> {
        Waveform::new(v, 16_000).unwrap()
    }

    #[test]
    fn clip_examples() {
        let w = wf(vec![0.3, 0.8, -0.9]);
        assert_eq!(peak_clip(&w, 1.0).unwrap(), w);
        let c = peak_clip(&w, 0.5).unwrap();
        for (a, b) in c.samples().iter().zip([0.3, 0.45, -0.45]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(clip_abs(&c, 0.45), c);
        assert!(peak_clip(&w, 0.0).is_err());
        assert!(peak_clip(&w, 1.5).is_err());
    }

    #[test]
    fn quantizer_examples() {
        let q = quantize(&wf(vec![0.3, 0.0, -0.3]), 8).unwrap();
        assert!((q.samples()[0] - 38.0 / 127.0).abs() < 1e-12);
        assert_eq!(q.samples()[1], 0.0);
        assert_eq!(q.samples()[2], -q.samples()[0]);
        assert!(quantize(&wf(vec![0.1]), 1).is_err());
        let sixteen = quantize(&wf(vec![0.123, -0.77, 0.5]), 16).unwrap();
        assert_eq!(quantize(&sixteen, 16).unwrap(), sixteen);
    }
}
