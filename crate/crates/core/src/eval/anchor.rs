use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_QUANTILES: usize = 9;
pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    /// Probability level `k/(q+1)`.
    pub level: f64,
    pub anchor: f64,
    /// Mean prediction of samples within tolerance; `None` for an empty anchor.
    pub mean_pred: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorCurve {
    pub tolerance: f64,
    pub points: Vec<AnchorPoint>,
}

impl AnchorCurve {
    /// `level,anchor,mean_pred,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,anchor,mean_pred,count\n");
        for p in &self.points {
            let m = p.mean_pred.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{m},{}\n", p.level, p.anchor, p.count));
        }
        s
    }
}

/// Linearly interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Anchors at the `k/(q+1)` quantiles of `truths` (`k = 1..=q`); each anchor
/// averages the predictions of samples whose truth lies within `tol`.
/// Repeated anchor values (heavily tied truths) are kept once.
pub fn anchor_curve(preds: &[f64], truths: &[f64], q: usize, tol: f64) -> Result<AnchorCurve> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch { left: preds.len(), right: truths.len() });
    }
    if truths.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if q < 2 {
        return Err(Error::OutOfRange(format!("{q} quantiles")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::OutOfRange(format!("tolerance {tol}")));
    }
    let mut sorted = truths.to_vec();
    if sorted.iter().chain(preds).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let mut points: Vec<AnchorPoint> = Vec::with_capacity(q);
    for k in 1..=q {
        let level = k as f64 / (q + 1) as f64;
        let anchor = quantile_sorted(&sorted, level);
        if points.last().is_some_and(|p| anchor <= p.anchor) {
            continue;
        }
        let near: Vec<f64> = truths.iter().zip(preds).filter(|(t, _)| (*t - anchor).abs() <= tol).map(|(_, &p)| p).collect();
        let mean_pred = (!near.is_empty()).then(|| near.iter().sum::<f64>() / near.len() as f64);
        points.push(AnchorPoint { level, anchor, mean_pred, count: near.len() });
    }
    Ok(AnchorCurve { tolerance: tol, points })
}
