//! Parameter storage, initialisation, small layer building blocks and the
//! Adam optimiser.

use std::ops::Index;

use ndarray::Zip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Mat<T>,
}

/// Named, ordered collection of weight matrices.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.by_name(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat<T> {
        &mut self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    /// Puts every parameter on the graph. `trainable` receives the parameter
    /// name and decides whether its gradient is tracked.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a, T>, trainable: impl Fn(&str) -> bool) -> Binding {
        Binding { nodes: self.params.iter().map(|p| g.borrowed(&p.value, trainable(&p.name))).collect() }
    }

    /// Flattened copy of every weight, in parameter order.
    pub fn flatten(&self) -> Vec<T> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    /// Inverse of [`ParamSet::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::LengthMismatch { left: flat.len(), right: self.num_scalars() });
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            for (dst, &src) in p.value.iter_mut().zip(&flat[off..off + n]) {
                *dst = src;
            }
            off += n;
        }
        Ok(())
    }

    /// Copies values of identically named parameters from `other`.
    /// Returns how many were copied.
    pub fn copy_matching(&mut self, other: &ParamSet<T>, map_name: impl Fn(&str) -> Option<String>) -> Result<usize> {
        let mut copied = 0;
        for p in &mut self.params {
            let Some(src_name) = map_name(&p.name) else { continue };
            let Some(src) = other.by_name(&src_name) else { continue };
            let src = other.get(src);
            if src.dim() != p.value.dim() {
                return Err(Error::Shape(format!("{}: {:?} vs {:?}", p.name, p.value.dim(), src.dim())));
            }
            p.value.assign(src);
            copied += 1;
        }
        Ok(copied)
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.mapv(|v| U::of(v.to_f64_lossy())) })
                .collect(),
        }
    }
}

/// Graph nodes for every parameter of a [`ParamSet`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Binding {
    nodes: Vec<Node>,
}

impl Binding {
    /// Extracts the gradient of each bound parameter (None when frozen or unused).
    pub fn collect<T: Scalar>(&self, grads: &mut Gradients<T>) -> Vec<Option<Mat<T>>> {
        self.nodes.iter().map(|&n| grads.take(n)).collect()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
}

impl Index<ParamId> for Binding {
    type Output = Node;

    fn index(&self, id: ParamId) -> &Node {
        &self.nodes[id.0]
    }
}

/// Seeded weight initialiser.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Glorot-uniform matrix.
    pub fn xavier<T: Scalar>(&mut self, rows: usize, cols: usize) -> Mat<T> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(rows, cols, limit)
    }

    pub fn uniform<T: Scalar>(&mut self, rows: usize, cols: usize, limit: f64) -> Mat<T> {
        Mat::from_shape_simple_fn((rows, cols), || T::of(self.rng.gen_range(-limit..=limit)))
    }

    pub fn zeros<T: Scalar>(rows: usize, cols: usize) -> Mat<T> {
        Mat::zeros((rows, cols))
    }

    pub fn ones<T: Scalar>(rows: usize, cols: usize) -> Mat<T> {
        Mat::from_elem((rows, cols), T::one())
    }
}

/// Dense layer `x·W + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, input: usize, output: usize, init: &mut Init) -> Self {
        let w = ps.add(format!("{name}.w"), init.xavier(input, output));
        let b = ps.add(format!("{name}.b"), Init::zeros(1, output));
        Self { w, b }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, bind: &Binding, x: Node) -> Node {
        g.linear(x, bind[self.w], bind[self.b])
    }

    pub fn dims<T: Scalar>(&self, ps: &ParamSet<T>) -> (usize, usize) {
        ps.get(self.w).dim()
    }
}

/// Layer norm with learned gain and bias.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, dim: usize) -> Self {
        let gain = ps.add(format!("{name}.gain"), Init::ones(1, dim));
        let bias = ps.add(format!("{name}.bias"), Init::zeros(1, dim));
        Self { gain, bias }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, bind: &Binding, x: Node) -> Node {
        g.layer_norm_affine(x, bind[self.gain], bind[self.bias])
    }
}

/// Multi-head self-attention with output projection (no residual).
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, dim: usize, heads: usize, init: &mut Init) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "{dim} not divisible into {heads} heads");
        Self {
            q: Linear::new(ps, &format!("{name}.q"), dim, dim, init),
            k: Linear::new(ps, &format!("{name}.k"), dim, dim, init),
            v: Linear::new(ps, &format!("{name}.v"), dim, dim, init),
            o: Linear::new(ps, &format!("{name}.o"), dim, dim, init),
            heads,
        }
    }

    /// Attends over the rows of `x`. When `maps` is given, the per-head
    /// attention matrices (rows sum to one) are appended to it.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        bind: &Binding,
        x: Node,
        mut maps: Option<&mut Vec<Node>>,
    ) -> Node {
        let dim = g.shape(x).1;
        let dh = dim / self.heads;
        let q = self.q.forward(g, bind, x);
        let k = self.k.forward(g, bind, x);
        let v = self.v.forward(g, bind, x);
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            let qh = g.slice_cols(q, a, b);
            let kh = g.slice_cols(k, a, b);
            let vh = g.slice_cols(v, a, b);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scores = g.scale(scores, scale);
            let att = g.softmax_rows(scores);
            if let Some(m) = maps.as_deref_mut() {
                m.push(att);
            }
            outs.push(g.matmul(att, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.o.forward(g, bind, cat)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optional global gradient-norm clip.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: None }
    }
}

/// Adam optimiser state for one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    cfg: AdamConfig,
    step: i32,
    moments: Vec<Option<(Mat<T>, Mat<T>)>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig, params: &ParamSet<T>) -> Self {
        Self { cfg, step: 0, moments: vec![None; params.len()] }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Applies one update. `grads[i]` of `None` leaves parameter `i` untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Mat<T>>]) {
        self.step += 1;
        let lr = T::of(self.cfg.lr);
        let (b1, b2) = (T::of(self.cfg.beta1), T::of(self.cfg.beta2));
        let eps = T::of(self.cfg.eps);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let scale = match self.cfg.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|g| g.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    T::of(max / norm)
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let value = &mut params.params[i].value;
            let (m, v) = self.moments[i].get_or_insert_with(|| (Mat::zeros(value.dim()), Mat::zeros(value.dim())));
            Zip::from(value).and(m).and(v).and(grad).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
    }
}

/// Derives a child seed from a parent seed and a label; stable across runs
/// and platforms (splitmix64 over an FNV-1a hash of the label).
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = parent ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
