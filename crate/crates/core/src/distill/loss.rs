use crate::autodiff::{Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn same_shape<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("teacher {:?} vs prediction {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::Empty("features"));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cross-entropy of `s` against its own sigmoid, natural log.
pub fn sigmoid_cosine_of(s: f64) -> f64 {
    let sh = sigmoid(s);
    -s * sh.ln() - (1.0 - s) * (1.0 - sh).ln()
}

/// Mean absolute elementwise difference.
pub fn l1_layer_loss<T: Scalar>(teacher: &Mat<T>, pred: &Mat<T>) -> Result<f64> {
    same_shape(teacher, pred)?;
    let sum: f64 = teacher.iter().zip(pred).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).abs()).sum();
    Ok(sum / teacher.len() as f64)
}

/// Cosine similarity of the flattened matrices.
pub fn cosine_similarity<T: Scalar>(teacher: &Mat<T>, pred: &Mat<T>) -> Result<f64> {
    same_shape(teacher, pred)?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in teacher.iter().zip(pred) {
        let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero-norm feature"));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Returns `(loss, s)`.
pub fn sigmoid_cosine_loss<T: Scalar>(teacher: &Mat<T>, pred: &Mat<T>) -> Result<(f64, f64)> {
    let s = cosine_similarity(teacher, pred)?;
    let l = sigmoid_cosine_of(s);
    if !l.is_finite() {
        return Err(Error::NonFinite("sigmoid cosine loss".into()));
    }
    Ok((l, s))
}

/// L1 plus sigmoid-cosine terms for one layer; returns `(loss, s)`.
pub fn layer_loss<T: Scalar>(teacher: &Mat<T>, pred: &Mat<T>) -> Result<(f64, f64)> {
    let l1 = l1_layer_loss(teacher, pred)?;
    let (lc, s) = sigmoid_cosine_loss(teacher, pred)?;
    Ok((l1 + lc, s))
}

/// `2 − mean(s)`.
pub fn difficulty_weight(similarities: &[f64]) -> Result<f64> {
    if similarities.is_empty() {
        return Err(Error::Empty("similarities"));
    }
    if let Some(s) = similarities.iter().find(|s| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(*s)) {
        return Err(Error::OutOfRange(format!("similarity {s}")));
    }
    Ok(2.0 - similarities.iter().sum::<f64>() / similarities.len() as f64)
}

/// `(1/B)·Σ_n mean_i(L_i,n)·d_n`; `layer_losses[n]` holds sample `n`'s per-layer losses.
pub fn distill_loss(layer_losses: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    if layer_losses.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if layer_losses.len() != weights.len() {
        return Err(Error::LengthMismatch { left: layer_losses.len(), right: weights.len() });
    }
    let layers = layer_losses[0].len();
    if layers == 0 {
        return Err(Error::Empty("layer losses"));
    }
    let mut total = 0.0;
    for (ls, &d) in layer_losses.iter().zip(weights) {
        if ls.len() != layers {
            return Err(Error::LengthMismatch { left: ls.len(), right: layers });
        }
        total += ls.iter().sum::<f64>() / layers as f64 * d;
    }
    Ok(total / layer_losses.len() as f64)
}

/// `lq + ld`.
pub fn total_loss(lq: f64, ld: f64) -> Result<f64> {
    if !lq.is_finite() || !ld.is_finite() {
        return Err(Error::NonFinite(format!("losses {lq}, {ld}")));
    }
    Ok(lq + ld)
}

/// Graph nodes of one layer's loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LayerLossNodes {
    pub l1: Node,
    pub cos: Node,
    /// Cosine similarity `s`.
    pub similarity: Node,
    pub total: Node,
}

pub fn cosine_graph<T: Scalar>(g: &mut Graph<'_, T>, teacher: Node, pred: Node) -> Node {
    let prod = g.mul(teacher, pred);
    let dot = g.sum(prod);
    let tt = g.square(teacher);
    let nt = g.sum(tt);
    let pp = g.square(pred);
    let np = g.sum(pp);
    let nn = g.mul(nt, np);
    let denom = g.sqrt(nn);
    g.div(dot, denom)
}

pub fn layer_loss_graph<T: Scalar>(g: &mut Graph<'_, T>, teacher: Node, pred: Node) -> Result<LayerLossNodes> {
    if g.shape(teacher) != g.shape(pred) {
        return Err(Error::Shape(format!("teacher {:?} vs prediction {:?}", g.shape(teacher), g.shape(pred))));
    }
    let diff = g.sub(pred, teacher);
    let abs = g.abs(diff);
    let l1 = g.mean(abs);
    let s = cosine_graph(g, teacher, pred);
    let sh = g.sigmoid(s);
    let log_sh = g.ln(sh);
    let neg = g.scale(s, -T::one());
    let one_minus_sh = g.sigmoid(neg);
    let log_1m = g.ln(one_minus_sh);
    let one_minus_s = g.add_scalar(neg, T::one());
    let a = g.mul(s, log_sh);
    let b = g.mul(one_minus_s, log_1m);
    let ab = g.add(a, b);
    let cos = g.scale(ab, -T::one());
    let total = g.add(l1, cos);
    Ok(LayerLossNodes { l1, cos, similarity: s, total })
}

/// `2 − mean(s)` over similarity nodes (1×1 each).
pub fn difficulty_graph<T: Scalar>(g: &mut Graph<'_, T>, similarities: &[Node]) -> Result<Node> {
    if similarities.is_empty() {
        return Err(Error::Empty("similarities"));
    }
    let all = g.concat_cols(similarities);
    let m = g.mean(all);
    let neg = g.scale(m, -T::one());
    Ok(g.add_scalar(neg, T::of(2.0)))
}

/// Graph form of [`distill_loss`].
pub fn distill_loss_graph<T: Scalar>(g: &mut Graph<'_, T>, layer_losses: &[Vec<Node>], weights: &[Node]) -> Result<Node> {
    if layer_losses.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if layer_losses.len() != weights.len() {
        return Err(Error::LengthMismatch { left: layer_losses.len(), right: weights.len() });
    }
    let layers = layer_losses[0].len();
    if layers == 0 {
        return Err(Error::Empty("layer losses"));
    }
    let mut weighted = Vec::with_capacity(weights.len());
    for (ls, &d) in layer_losses.iter().zip(weights) {
        if ls.len() != layers {
            return Err(Error::LengthMismatch { left: ls.len(), right: layers });
        }
        let row = g.concat_cols(ls);
        let mean_l = g.mean(row);
        weighted.push(g.mul(mean_l, d));
    }
    let all = g.concat_rows(&weighted);
    Ok(g.mean(all))
}

/// Graph form of [`total_loss`].
pub fn total_loss_graph<T: Scalar>(g: &mut Graph<'_, T>, lq: Node, ld: Node) -> Node {
    g.add(lq, ld)
}
