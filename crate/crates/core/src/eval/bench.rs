use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type FeatureFn<'a, T> = Box<dyn Fn(&Waveform<T>) -> Result<Vec<Mat<T>>> + 'a>;
pub type PredictFn<'a, T> = Box<dyn Fn(&[Mat<T>]) -> Result<f64> + 'a>;

/// A named feature extractor and predictor pair.
pub struct Variant<'a, T> {
    pub name: String,
    pub features: FeatureFn<'a, T>,
    pub predict: PredictFn<'a, T>,
}

impl<'a, T> Variant<'a, T> {
    pub fn new(
        name: impl Into<String>,
        features: impl Fn(&Waveform<T>) -> Result<Vec<Mat<T>>> + 'a,
        predict: impl Fn(&[Mat<T>]) -> Result<f64> + 'a,
    ) -> Self {
        Self { name: name.into(), features: Box::new(features), predict: Box::new(predict) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_s: f64,
    pub std_s: f64,
}

impl Timing {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean_s: mean, std_s: var.sqrt() }
    }
}

/// Per-clip wall-clock statistics of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantTiming {
    pub name: String,
    pub runs: usize,
    pub features: Timing,
    pub predict: Timing,
    pub total: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub variants: Vec<VariantTiming>,
}

impl RuntimeReport {
    pub fn get(&self, name: &str) -> Option<&VariantTiming> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Mean feature-extraction time of `a` divided by that of `b`.
    pub fn feature_ratio(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.get(a)?.features.mean_s / self.get(b)?.features.mean_s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,runs,feature_mean_s,feature_std_s,predict_mean_s,predict_std_s,total_mean_s,total_std_s\n");
        for v in &self.variants {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                v.name, v.runs, v.features.mean_s, v.features.std_s, v.predict.mean_s, v.predict.std_s, v.total.mean_s, v.total.std_s
            ));
        }
        s
    }
}

/// Times every variant on every clip `repeats` times after `warmup` untimed passes.
pub fn bench_runtime<T: Scalar>(
    variants: &[Variant<'_, T>],
    clips: &[Waveform<T>],
    warmup: usize,
    repeats: usize,
) -> Result<RuntimeReport> {
    if variants.is_empty() {
        return Err(Error::Empty("variants"));
    }
    if clips.is_empty() {
        return Err(Error::Empty("clips"));
    }
    let repeats = repeats.max(1);
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        for c in clips.iter().cycle().take(warmup) {
            (v.predict)(&(v.features)(c)?)?;
        }
        let (mut fe, mut pr, mut tot) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..repeats {
            for c in clips {
                let t0 = Instant::now();
                let f = (v.features)(c)?;
                let t1 = Instant::now();
                std::hint::black_box((v.predict)(&f)?);
                let t2 = Instant::now();
                fe.push((t1 - t0).as_secs_f64());
                pr.push((t2 - t1).as_secs_f64());
                tot.push((t2 - t0).as_secs_f64());
            }
        }
        out.push(VariantTiming {
            name: v.name.clone(),
            runs: tot.len(),
            features: Timing::of(&fe),
            predict: Timing::of(&pr),
            total: Timing::of(&tot),
        });
    }
    Ok(RuntimeReport { variants: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth::tone;

    fn busy(n: usize) -> f64 {
        (0..n).map(|i| (i as f64).sqrt()).sum()
    }

    #[test]
    fn stages_sum_and_ordering() {
        let clips = vec![tone::<f64>(440.0, 0.1, 1600, 16_000)];
        let slow = Variant::new("slow", |_: &Waveform<f64>| Ok(vec![Mat::from_elem((1, 1), busy(400_000))]), |m: &[Mat<f64>]| Ok(m[0][[0, 0]]));
        let fast = Variant::new("fast", |_: &Waveform<f64>| Ok(vec![Mat::from_elem((1, 1), busy(20_000))]), |m: &[Mat<f64>]| Ok(m[0][[0, 0]]));
        let r = bench_runtime(&[slow, fast], &clips, 2, 10).unwrap();
        assert_eq!(r.variants.len(), 2);
        assert!(r.feature_ratio("fast", "slow").unwrap() < 1.0);
        for v in &r.variants {
            let sum = v.features.mean_s + v.predict.mean_s;
            assert!((sum - v.total.mean_s).abs() <= 0.05 * v.total.mean_s);
        }
        assert_eq!(r.to_csv().lines().count(), 3);
    }
}
