use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{lcc, mse, srcc};
use crate::error::{Error, Result};

/// A prediction with its label and slice tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredClip {
    pub id: String,
    pub truth: f64,
    pub pred: f64,
    pub genre: String,
    pub category: String,
    pub condition_id: String,
    pub seen: bool,
}

/// Metrics of one slice; `None` where undefined (fewer than two items or no variance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub slice: String,
    pub count: usize,
    pub lcc: Option<f64>,
    pub srcc: Option<f64>,
    pub mse: Option<f64>,
}

impl SliceMetrics {
    pub fn compute(slice: impl Into<String>, truth: &[f64], pred: &[f64]) -> Result<Self> {
        let count = truth.len();
        let (lcc, srcc) = if count >= 2 {
            (lcc(pred, truth).ok(), srcc(pred, truth).ok())
        } else {
            (None, None)
        };
        let mse = if count >= 2 { Some(mse(pred, truth)?) } else { None };
        Ok(Self { slice: slice.into(), count, lcc, srcc, mse })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: SliceMetrics,
    /// Slices named `dimension=value`, sorted.
    pub slices: Vec<SliceMetrics>,
}

pub const SLICE_DIMENSIONS: [&str; 4] = ["genre", "category", "condition", "set"];

impl EvalReport {
    /// Long format: `slice,metric,value,count`, empty value when undefined.
    pub fn to_long_csv(&self) -> String {
        let mut s = String::from("slice,metric,value,count\n");
        for m in std::iter::once(&self.overall).chain(&self.slices) {
            for (name, v) in [("lcc", m.lcc), ("srcc", m.srcc), ("mse", m.mse)] {
                let v = v.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{},{name},{v},{}", m.slice, m.count);
            }
        }
        s
    }

    /// Wide format: `slice,count,lcc,srcc,mse`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("slice,count,lcc,srcc,mse\n");
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for m in std::iter::once(&self.overall).chain(&self.slices) {
            let _ = writeln!(s, "{},{},{},{},{}", m.slice, m.count, f(m.lcc), f(m.srcc), f(m.mse));
        }
        s
    }

    pub fn slice(&self, name: &str) -> Option<&SliceMetrics> {
        self.slices.iter().find(|m| m.slice == name)
    }
}

/// Overall and per-slice metrics. Row order does not affect the result.
pub fn evaluate_scored(rows: &[ScoredClip]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut sorted: Vec<&ScoredClip> = rows.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id).then(a.truth.total_cmp(&b.truth)).then(a.pred.total_cmp(&b.pred)));
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in &sorted {
        let set = if r.seen { "seen" } else { "unseen" };
        for key in [
            format!("genre={}", r.genre),
            format!("category={}", r.category),
            format!("condition={}", r.condition_id),
            format!("set={set}"),
        ] {
            let e = groups.entry(key).or_default();
            e.0.push(r.truth);
            e.1.push(r.pred);
        }
    }
    let truth: Vec<f64> = sorted.iter().map(|r| r.truth).collect();
    let pred: Vec<f64> = sorted.iter().map(|r| r.pred).collect();
    let overall = SliceMetrics::compute("overall", &truth, &pred)?;
    let slices = groups.into_iter().map(|(k, (t, p))| SliceMetrics::compute(k, &t, &p)).collect::<Result<_>>()?;
    Ok(EvalReport { overall, slices })
}

/// Predicts every row with `predict`, then evaluates.
pub fn evaluate<R>(
    rows: &[R],
    mut predict: impl FnMut(&R) -> Result<f64>,
    tag: impl Fn(&R, f64) -> ScoredClip,
) -> Result<EvalReport> {
    let scored = rows.iter().map(|r| Ok(tag(r, predict(r)?))).collect::<Result<Vec<_>>>()?;
    evaluate_scored(&scored)
}
