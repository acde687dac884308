//! Correlation and error metrics, sliced reports, anchor curves, level sweeps
//! and runtime benchmarks.

mod anchor;
mod bench;
mod metrics;
mod report;
mod spl;

pub use anchor::{anchor_curve, quantile_sorted, AnchorCurve, AnchorPoint, DEFAULT_QUANTILES, DEFAULT_TOLERANCE};
pub use bench::{bench_runtime, FeatureFn, PredictFn, RuntimeReport, Timing, Variant, VariantTiming};
pub use metrics::{lcc, mse, ranks, srcc};
pub use report::{evaluate, evaluate_scored, EvalReport, ScoredClip, SliceMetrics, SLICE_DIMENSIONS};
pub use spl::{spl_sweep, SplSweep, SweepRow, DEFAULT_LEVELS_DB, REFERENCE_LEVEL_DB};
