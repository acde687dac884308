//! Softmax-weighted layer fusion, the adapter projection and window averaging.

use serde::{Deserialize, Serialize};

use super::encoder::LayerOutputs;
use super::matrix::FeatureMatrix;
use crate::autodiff::{layer_norm_rows, softmax_rows, Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Width of the predictor's acoustic input.
pub const ADAPTED_DIM: usize = 257;

/// Pre-softmax logits, one per fused layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub logits: Vec<f64>,
}

impl LayerWeights {
    pub fn uniform(n: usize) -> Self {
        Self { logits: vec![0.0; n] }
    }

    pub fn softmax(&self) -> Vec<f64> {
        let row = Mat::from_shape_vec((1, self.logits.len()), self.logits.clone()).expect("1×n");
        softmax_rows(&row).into_iter().collect()
    }
}

/// `Σᵢ softmax(w)ᵢ · LN(Xⁱ)` with a parameter-free per-row layer norm.
pub fn weighted_sum<T: Scalar>(lo: &LayerOutputs<T>, lw: &LayerWeights, frame_rate: f64) -> Result<FeatureMatrix<T>> {
    if lw.logits.len() != lo.len() {
        return Err(Error::LengthMismatch { left: lw.logits.len(), right: lo.len() });
    }
    if lw.logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("layer weight".into()));
    }
    let p = lw.softmax();
    let mut acc: Option<Mat<T>> = None;
    for (x, &pi) in lo.iter().zip(&p) {
        let term = layer_norm_rows(x).0 * T::of(pi);
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    FeatureMatrix::new(acc.expect("at least one layer"), frame_rate)
}

/// Graph version of [`weighted_sum`]; `logits` is a `1 × L` node.
pub fn weighted_sum_graph<T: Scalar>(g: &mut Graph<'_, T>, layers: &[Node], logits: Node) -> Node {
    assert_eq!(g.shape(logits), (1, layers.len()), "one logit per layer");
    let p = g.softmax_rows(logits);
    let mut acc = None;
    for (i, &x) in layers.iter().enumerate() {
        let n = g.layer_norm_rows(x);
        let t = g.scale_by(n, p, i);
        acc = Some(match acc {
            Some(a) => g.add(a, t),
            None => t,
        });
    }
    acc.expect("at least one layer")
}

/// Affine map `x·W + b` of every frame.
pub fn adapt<T: Scalar>(x: &FeatureMatrix<T>, w: &Mat<T>, b: &Mat<T>) -> Result<FeatureMatrix<T>> {
    if w.nrows() != x.dim() || b.dim() != (1, w.ncols()) {
        return Err(Error::Shape(format!("adapter {:?}+{:?} on {} features", w.dim(), b.dim(), x.dim())));
    }
    FeatureMatrix::new(x.data().dot(w) + b, x.frame_rate())
}

/// Mean of each run of `k` consecutive features; a remainder shorter than `k` is dropped.
pub fn window_average<T: Scalar>(x: &FeatureMatrix<T>, k: usize) -> Result<FeatureMatrix<T>> {
    if k == 0 || k > x.dim() {
        return Err(Error::OutOfRange(format!("window {k} for {} features", x.dim())));
    }
    let out = x.dim() / k;
    let inv = T::one() / T::of(k as f64);
    let data = Mat::from_shape_fn((x.frames(), out), |(r, c)| {
        (0..k).map(|j| x.data()[[r, c * k + j]]).sum::<T>() * inv
    });
    FeatureMatrix::new(data, x.frame_rate())
}
