use serde::{Deserialize, Serialize};

use super::metrics::{lcc, mse};
use crate::dsp::{adjust_spl, measure_spl, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LEVELS_DB: [f64; 7] = [35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 95.0];
pub const REFERENCE_LEVEL_DB: f64 = 65.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub level_db: f64,
    pub mean_pred: f64,
    /// Agreement with the reference-level predictions.
    pub lcc_vs_ref: Option<f64>,
    pub mse_vs_ref: f64,
    pub max_abs_diff_vs_ref: f64,
    /// Largest `|measured − target|` after adjustment.
    pub max_level_error_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplSweep {
    pub reference_db: f64,
    pub reference: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

impl SplSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level_db,mean_pred,lcc_vs_ref,mse_vs_ref,max_abs_diff_vs_ref,max_level_error_db\n");
        for r in &self.rows {
            let l = r.lcc_vs_ref.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{l},{},{},{}\n",
                r.level_db, r.mean_pred, r.mse_vs_ref, r.max_abs_diff_vs_ref, r.max_level_error_db
            ));
        }
        s
    }
}

fn predictions_at<T: Scalar>(
    clips: &[Waveform<T>],
    level: f64,
    predict: &mut impl FnMut(usize, &Waveform<T>) -> Result<f64>,
) -> Result<(Vec<f64>, f64)> {
    let mut preds = Vec::with_capacity(clips.len());
    let mut worst = 0.0f64;
    for (i, c) in clips.iter().enumerate() {
        let w = adjust_spl(c, level)?;
        worst = worst.max((measure_spl(&w)?.spl_db - level).abs());
        preds.push(predict(i, &w)?);
    }
    Ok((preds, worst))
}

/// Re-levels every clip to each of `levels` and compares predictions with
/// those at the reference level. `predict` receives the clip index.
pub fn spl_sweep<T: Scalar>(
    clips: &[Waveform<T>],
    levels: &[f64],
    mut predict: impl FnMut(usize, &Waveform<T>) -> Result<f64>,
) -> Result<SplSweep> {
    if clips.is_empty() {
        return Err(Error::Empty("clips"));
    }
    if levels.is_empty() {
        return Err(Error::Empty("levels"));
    }
    if let Some(l) = levels.iter().find(|l| !l.is_finite()) {
        return Err(Error::NonFinite(format!("level {l}")));
    }
    let (reference, _) = predictions_at(clips, REFERENCE_LEVEL_DB, &mut predict)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let (preds, err) = predictions_at(clips, level, &mut predict)?;
        rows.push(SweepRow {
            level_db: level,
            mean_pred: preds.iter().sum::<f64>() / preds.len() as f64,
            lcc_vs_ref: if preds.len() >= 2 { lcc(&preds, &reference).ok() } else { None },
            mse_vs_ref: mse(&preds, &reference)?,
            max_abs_diff_vs_ref: preds.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            max_level_error_db: err,
        });
    }
    Ok(SplSweep { reference_db: REFERENCE_LEVEL_DB, reference, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::synth::{music_clip, Genre};

    #[test]
    fn sweep_contract() {
        let clips: Vec<Waveform<f64>> =
            Genre::ALL.iter().take(3).enumerate().map(|(i, &g)| music_clip(g, 0.25, 16_000, i as u64)).collect();
        // a level-sensitive stand-in predictor
        let sweep = spl_sweep(&clips, &DEFAULT_LEVELS_DB, |i, w| Ok(w.rms() * (1.0 + i as f64))).unwrap();
        assert_eq!(sweep.rows.len(), 7);
        let at65 = &sweep.rows[3];
        assert_eq!(at65.mse_vs_ref, 0.0);
        assert_eq!(at65.max_abs_diff_vs_ref, 0.0);
        assert!(sweep.rows.iter().all(|r| r.max_level_error_db < 0.01));
        assert!(sweep.rows[6].mean_pred > sweep.rows[0].mean_pred);
        assert_eq!(sweep.to_csv().lines().count(), 8);
    }

    #[test]
    fn errors() {
        let w = Waveform::new(vec![0.0f64; 10], 16_000).unwrap();
        assert!(matches!(spl_sweep(&[w], &[65.0], |_, _| Ok(0.0)), Err(Error::SilentInput)));
        assert!(spl_sweep::<f64>(&[], &[65.0], |_, _| Ok(0.0)).is_err());
    }
}
