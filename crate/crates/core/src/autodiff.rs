//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] on a scalar (1×1) node walks the tape in reverse and
//! accumulates gradients for every node that (transitively) depends on a
//! trainable leaf. Leaves can borrow their value, so binding a model's
//! parameters to a graph does not copy them.

use std::borrow::Cow;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Axis, Zip};

use crate::scalar::Scalar;

pub type Mat<T> = Array2<T>;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node(usize);

impl Node {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Node, Node),
    Add(Node, Node),
    Sub(Node, Node),
    Mul(Node, Node),
    Div(Node, Node),
    AddRow(Node, Node),
    MulRow(Node, Node),
    ScaleBy(Node, Node, usize),
    Scale(Node, T),
    AddScalar(Node),
    Relu(Node),
    Gelu(Node),
    Sigmoid(Node),
    Tanh(Node),
    Ln(Node),
    Abs(Node),
    Square(Node),
    Sqrt(Node),
    SoftmaxRows(Node),
    LayerNormRows(Node),
    Transpose(Node),
    ConcatCols(Vec<Node>),
    ConcatRows(Vec<Node>),
    SliceCols(Node, usize, usize),
    SliceRows(Node, usize, usize),
    Sum(Node),
    Mean(Node),
}

struct Entry<'a, T: Scalar> {
    value: Cow<'a, Mat<T>>,
    op: Op<T>,
    requires_grad: bool,
    // per-row inverse standard deviation for layer norm
    aux: Option<Vec<T>>,
}

/// Tape of recorded operations.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Entry<'a, T>>,
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    half * x * (T::one() + (k * (x + T::of(GELU_C) * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::of((2.0 / std::f64::consts::PI).sqrt());
    let half = T::of(0.5);
    let inner = k * (x + T::of(GELU_C) * x * x * x);
    let t = inner.tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * k * (T::one() + T::of(3.0 * GELU_C) * x * x)
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows<T: Scalar>(a: &Mat<T>) -> Mat<T> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Epsilon used by every layer norm in the crate.
pub const LN_EPS: f64 = 1e-5;

/// Row-wise standardisation (zero mean, unit variance), returning the
/// normalised matrix and the per-row inverse standard deviations.
pub fn layer_norm_rows<T: Scalar>(a: &Mat<T>) -> (Mat<T>, Vec<T>) {
    let n = T::from_usize(a.ncols()).unwrap();
    let eps = T::of(LN_EPS);
    let mut out = a.clone();
    let mut inv = Vec::with_capacity(a.nrows());
    for mut row in out.rows_mut() {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let is = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * is);
        inv.push(is);
    }
    (out, inv)
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>, parents: &[Node]) -> Node {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Entry { value: Cow::Owned(value), op, requires_grad, aux: None });
        Node(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Mat<T>) -> Node {
        self.nodes.push(Entry { value: Cow::Owned(value), op: Op::Leaf, requires_grad: false, aux: None });
        Node(self.nodes.len() - 1)
    }

    /// Leaf borrowing its value; `trainable` decides whether gradients are tracked.
    pub fn borrowed(&mut self, value: &'a Mat<T>, trainable: bool) -> Node {
        self.nodes.push(Entry { value: Cow::Borrowed(value), op: Op::Leaf, requires_grad: trainable, aux: None });
        Node(self.nodes.len() - 1)
    }

    /// Owned leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Mat<T>) -> Node {
        self.nodes.push(Entry { value: Cow::Owned(value), op: Op::Leaf, requires_grad: true, aux: None });
        Node(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, v: T) -> Node {
        self.constant(Mat::from_elem((1, 1), v))
    }

    pub fn value(&self, n: Node) -> &Mat<T> {
        &self.nodes[n.0].value
    }

    /// Value of a 1×1 node.
    pub fn item(&self, n: Node) -> T {
        let v = self.value(n);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn shape(&self, n: Node) -> (usize, usize) {
        self.value(n).dim()
    }

    pub fn requires_grad(&self, n: Node) -> bool {
        self.nodes[n.0].requires_grad
    }

    pub fn matmul(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: Node, b: Node) -> Node {
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b), &[a, b])
    }

    /// `a + b` with `b` a 1×n row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Node, row: Node) -> Node {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    /// `a ∘ b` with `b` a 1×n row broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Node, row: Node) -> Node {
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row), &[a, row])
    }

    /// Multiplies `a` by the single entry `s[0, idx]`.
    pub fn scale_by(&mut self, a: Node, s: Node, idx: usize) -> Node {
        let k = self.value(s)[[0, idx]];
        let v = self.value(a) * k;
        self.push(v, Op::ScaleBy(a, s, idx), &[a, s])
    }

    pub fn scale(&mut self, a: Node, k: T) -> Node {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k), &[a])
    }

    pub fn add_scalar(&mut self, a: Node, k: T) -> Node {
        let v = self.value(a) + k;
        self.push(v, Op::AddScalar(a), &[a])
    }

    /// Affine map `x·W + b`.
    pub fn linear(&mut self, x: Node, w: Node, b: Node) -> Node {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    fn unary(&mut self, a: Node, f: impl Fn(T) -> T, op: Op<T>) -> Node {
        let v = self.value(a).mapv(f);
        self.push(v, op, &[a])
    }

    pub fn relu(&mut self, a: Node) -> Node {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn gelu(&mut self, a: Node) -> Node {
        self.unary(a, gelu, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Node) -> Node {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Node) -> Node {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn ln(&mut self, a: Node) -> Node {
        self.unary(a, |x| x.ln(), Op::Ln(a))
    }

    pub fn abs(&mut self, a: Node) -> Node {
        self.unary(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn square(&mut self, a: Node) -> Node {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Node) -> Node {
        self.unary(a, |x| x.sqrt(), Op::Sqrt(a))
    }

    pub fn softmax_rows(&mut self, a: Node) -> Node {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise layer norm without affine parameters.
    pub fn layer_norm_rows(&mut self, a: Node) -> Node {
        let (v, inv) = layer_norm_rows(self.value(a));
        let n = self.push(v, Op::LayerNormRows(a), &[a]);
        self.nodes[n.0].aux = Some(inv);
        n
    }

    /// Layer norm followed by a learned per-column gain and bias.
    pub fn layer_norm_affine(&mut self, a: Node, gain: Node, bias: Node) -> Node {
        let n = self.layer_norm_rows(a);
        let g = self.mul_row(n, gain);
        self.add_row(g, bias)
    }

    pub fn transpose(&mut self, a: Node) -> Node {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Node]) -> Node {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Node]) -> Node {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Node, start: usize, end: usize) -> Node {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end), &[a])
    }

    pub fn slice_rows(&mut self, a: Node, start: usize, end: usize) -> Node {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end), &[a])
    }

    pub fn sum(&mut self, a: Node) -> Node {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Node) -> Node {
        let v = Mat::from_elem((1, 1), self.value(a).mean().unwrap_or_else(T::zero));
        self.push(v, Op::Mean(a), &[a])
    }

    /// Reverse pass from a 1×1 node.
    pub fn backward(&self, root: Node) -> Gradients<T> {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Mat::from_elem((1, 1), T::one()));
        for i in (0..=root.0).rev() {
            let entry = &self.nodes[i];
            if !entry.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(entry.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn wants(&self, n: Node) -> bool {
        self.nodes[n.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Mat<T>, grads: &mut [Option<Mat<T>>]) {
        let entry = &self.nodes[i];
        let y: &Mat<T> = &entry.value;
        match &entry.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let bv = self.value(*b);
                    let slot = slot(grads, *a, self.shape(*a));
                    general_mat_mul(T::one(), g, &bv.t(), T::one(), slot);
                }
                if self.wants(*b) {
                    let av = self.value(*a);
                    let slot = slot(grads, *b, self.shape(*b));
                    general_mat_mul(T::one(), &av.t(), g, T::one(), slot);
                }
            }
            Op::Add(a, b) => {
                for p in [a, b] {
                    if self.wants(*p) {
                        *slot(grads, *p, g.dim()) += g;
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    *slot(grads, *a, g.dim()) += g;
                }
                if self.wants(*b) {
                    *slot(grads, *b, g.dim()) -= g;
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bv = self.value(*b);
                    Zip::from(slot(grads, *a, g.dim())).and(g).and(bv).for_each(|s, &g, &b| *s += g * b);
                }
                if self.wants(*b) {
                    let av = self.value(*a);
                    Zip::from(slot(grads, *b, g.dim())).and(g).and(av).for_each(|s, &g, &a| *s += g * a);
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.wants(*a) {
                    Zip::from(slot(grads, *a, g.dim())).and(g).and(bv).for_each(|s, &g, &b| *s += g / b);
                }
                if self.wants(*b) {
                    Zip::from(slot(grads, *b, g.dim()))
                        .and(g)
                        .and(y)
                        .and(bv)
                        .for_each(|s, &g, &y, &b| *s -= g * y / b);
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*a) {
                    *slot(grads, *a, g.dim()) += g;
                }
                if self.wants(*row) {
                    let colsum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    *slot(grads, *row, colsum.dim()) += &colsum;
                }
            }
            Op::MulRow(a, row) => {
                let rv = self.value(*row);
                if self.wants(*a) {
                    let s = slot(grads, *a, g.dim());
                    *s += &(g * rv);
                }
                if self.wants(*row) {
                    let av = self.value(*a);
                    let colsum = (g * av).sum_axis(Axis(0)).insert_axis(Axis(0));
                    *slot(grads, *row, colsum.dim()) += &colsum;
                }
            }
            Op::ScaleBy(a, s, idx) => {
                let sv = self.value(*s);
                if self.wants(*a) {
                    let k = sv[[0, *idx]];
                    slot(grads, *a, g.dim()).scaled_add(k, g);
                }
                if self.wants(*s) {
                    let av = self.value(*a);
                    let dot = Zip::from(g).and(av).fold(T::zero(), |acc, &g, &a| acc + g * a);
                    slot(grads, *s, sv.dim())[[0, *idx]] += dot;
                }
            }
            Op::Scale(a, k) => {
                if self.wants(*a) {
                    slot(grads, *a, g.dim()).scaled_add(*k, g);
                }
            }
            Op::AddScalar(a) => {
                if self.wants(*a) {
                    *slot(grads, *a, g.dim()) += g;
                }
            }
            Op::Relu(a) => self.unary_back(*a, g, grads, |x, _| if x > T::zero() { T::one() } else { T::zero() }),
            Op::Gelu(a) => self.unary_back(*a, g, grads, |x, _| gelu_grad(x)),
            Op::Sigmoid(a) => {
                if self.wants(*a) {
                    Zip::from(slot(grads, *a, g.dim()))
                        .and(g)
                        .and(y)
                        .for_each(|s, &g, &y| *s += g * y * (T::one() - y));
                }
            }
            Op::Tanh(a) => {
                if self.wants(*a) {
                    Zip::from(slot(grads, *a, g.dim()))
                        .and(g)
                        .and(y)
                        .for_each(|s, &g, &y| *s += g * (T::one() - y * y));
                }
            }
            Op::Ln(a) => self.unary_back(*a, g, grads, |x, _| T::one() / x),
            Op::Abs(a) => self.unary_back(*a, g, grads, |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }),
            Op::Square(a) => self.unary_back(*a, g, grads, |x, _| x + x),
            Op::Sqrt(a) => {
                if self.wants(*a) {
                    Zip::from(slot(grads, *a, g.dim()))
                        .and(g)
                        .and(y)
                        .for_each(|s, &g, &y| *s += g / (y + y));
                }
            }
            Op::SoftmaxRows(a) => {
                if self.wants(*a) {
                    let s = slot(grads, *a, g.dim());
                    for ((mut srow, grow), yrow) in s.rows_mut().into_iter().zip(g.rows()).zip(y.rows()) {
                        let dot = Zip::from(&grow).and(&yrow).fold(T::zero(), |acc, &g, &y| acc + g * y);
                        Zip::from(&mut srow).and(&grow).and(&yrow).for_each(|s, &g, &y| *s += y * (g - dot));
                    }
                }
            }
            Op::LayerNormRows(a) => {
                if self.wants(*a) {
                    let inv = entry.aux.as_ref().expect("layer norm keeps its statistics");
                    let n = T::from_usize(g.ncols()).unwrap();
                    let s = slot(grads, *a, g.dim());
                    for (r, ((mut srow, grow), yrow)) in
                        s.rows_mut().into_iter().zip(g.rows()).zip(y.rows()).enumerate()
                    {
                        let mg = grow.sum() / n;
                        let mgy = Zip::from(&grow).and(&yrow).fold(T::zero(), |acc, &g, &y| acc + g * y) / n;
                        let is = inv[r];
                        Zip::from(&mut srow)
                            .and(&grow)
                            .and(&yrow)
                            .for_each(|s, &g, &y| *s += is * (g - mg - y * mgy));
                    }
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    *slot(grads, *a, self.shape(*a)) += &g.t();
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    if self.wants(*p) {
                        *slot(grads, *p, self.shape(*p)) += &g.slice(s![.., start..start + w]);
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    if self.wants(*p) {
                        *slot(grads, *p, self.shape(*p)) += &g.slice(s![start..start + h, ..]);
                    }
                    start += h;
                }
            }
            Op::SliceCols(a, start, end) => {
                if self.wants(*a) {
                    let mut dst = slot(grads, *a, self.shape(*a)).slice_mut(s![.., *start..*end]);
                    dst += g;
                }
            }
            Op::SliceRows(a, start, end) => {
                if self.wants(*a) {
                    let mut dst = slot(grads, *a, self.shape(*a)).slice_mut(s![*start..*end, ..]);
                    dst += g;
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let k = g[[0, 0]];
                    slot(grads, *a, self.shape(*a)).mapv_inplace(|v| v + k);
                }
            }
            Op::Mean(a) => {
                if self.wants(*a) {
                    let shape = self.shape(*a);
                    let k = g[[0, 0]] / T::from_usize(shape.0 * shape.1).unwrap();
                    slot(grads, *a, shape).mapv_inplace(|v| v + k);
                }
            }
        }
    }

    fn unary_back(&self, a: Node, g: &Mat<T>, grads: &mut [Option<Mat<T>>], d: impl Fn(T, T) -> T) {
        if !self.wants(a) {
            return;
        }
        let x = self.value(a);
        Zip::from(slot(grads, a, g.dim())).and(g).and(x).for_each(|s, &g, &x| *s += g * d(x, g));
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Mat<T>>], n: Node, shape: (usize, usize)) -> &mut Mat<T> {
    grads[n.0].get_or_insert_with(|| Mat::zeros(shape))
}

/// Gradients produced by [`Graph::backward`]. Only leaves keep theirs.
pub struct Gradients<T> {
    grads: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, n: Node) -> Option<&Mat<T>> {
        self.grads.get(n.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, n: Node) -> Option<Mat<T>> {
        self.grads.get_mut(n.0).and_then(|g| g.take())
    }
}

/// Errors raised by [`numeric_gradient`].
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GradCheckError {
    #[error("step size must be positive")]
    BadStep,
    #[error("loss is not finite at probe point for coordinate {0}")]
    NonFinite(usize),
}

/// Central finite differences `(f(p + ε·e_i) − f(p − ε·e_i)) / 2ε` for every coordinate.
pub fn numeric_gradient<T, F>(mut loss: F, params: &[T], eps: T) -> Result<Vec<T>, GradCheckError>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(eps > T::zero()) {
        return Err(GradCheckError::BadStep);
    }
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let up = loss(&p);
        p[i] = orig - eps;
        let down = loss(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(GradCheckError::NonFinite(i));
        }
        out.push((up - down) / (eps + eps));
    }
    Ok(out)
}

/// Largest relative deviation between two gradient vectors, using
/// `|a − b| / max(|a|, |b|, floor)` per coordinate.
pub fn max_relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(T::zero(), T::max)
}
