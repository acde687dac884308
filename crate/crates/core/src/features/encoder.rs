//! Patch-embedding transformer encoder that exposes every layer's output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use crate::autodiff::{Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::nn::{derive_seed, Binding, Init, LayerNorm, Linear, MultiHeadAttention, ParamSet};
use crate::scalar::Scalar;
use crate::weights::WeightFile;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub mel_bins: usize,
    pub patch_frames: usize,
    pub patch_bins: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { num_layers: 12, model_dim: 96, num_heads: 4, ff_dim: 384, mel_bins: 64, patch_frames: 4, patch_bins: 16 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("encoder: {m}")));
        if self.num_layers == 0 {
            return bad("num_layers must be >= 1".into());
        }
        if self.num_heads == 0 || !self.model_dim.is_multiple_of(self.num_heads) {
            return bad(format!("model_dim {} not divisible by {} heads", self.model_dim, self.num_heads));
        }
        if self.ff_dim == 0 || self.patch_frames == 0 || self.patch_bins == 0 {
            return bad("ff_dim and patch sizes must be positive".into());
        }
        if self.mel_bins == 0 || !self.mel_bins.is_multiple_of(self.patch_bins) {
            return bad(format!("mel_bins {} not a multiple of patch_bins {}", self.mel_bins, self.patch_bins));
        }
        Ok(())
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_frames * self.patch_bins
    }

    /// Token count for `frames` filterbank frames.
    pub fn tokens(&self, frames: usize) -> usize {
        frames / self.patch_frames * (self.mel_bins / self.patch_bins)
    }
}

/// Cuts a `frames × mel_bins` filterbank into flattened patches, one token
/// per (time patch, frequency patch), time-major; trailing frames that do not
/// fill a patch are dropped.
pub fn patchify<T: Scalar>(fb: &Mat<T>, cfg: &EncoderConfig) -> Result<Mat<T>> {
    if fb.ncols() != cfg.mel_bins {
        return Err(Error::Shape(format!("filterbank has {} bins, encoder expects {}", fb.ncols(), cfg.mel_bins)));
    }
    if fb.nrows() < cfg.patch_frames {
        return Err(Error::TooShort { needed: cfg.patch_frames, got: fb.nrows() });
    }
    let (pf, pb) = (cfg.patch_frames, cfg.patch_bins);
    let fpatches = cfg.mel_bins / pb;
    let tokens = cfg.tokens(fb.nrows());
    Ok(Mat::from_shape_fn((tokens, pf * pb), |(r, c)| {
        let (tp, fp) = (r / fpatches, r % fpatches);
        let (i, j) = (c / pb, c % pb);
        fb[[tp * pf + i, fp * pb + j]]
    }))
}

/// Pre-norm transformer layer: `x + MHA(LN(x))`, then `x + FF(LN(x))` with GELU.
#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl Block {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, cfg: &EncoderConfig, init: &mut Init) -> Self {
        Self {
            ln1: LayerNorm::new(ps, &format!("{name}.ln1"), cfg.model_dim),
            attn: MultiHeadAttention::new(ps, &format!("{name}.attn"), cfg.model_dim, cfg.num_heads, init),
            ln2: LayerNorm::new(ps, &format!("{name}.ln2"), cfg.model_dim),
            ff1: Linear::new(ps, &format!("{name}.ff1"), cfg.model_dim, cfg.ff_dim, init),
            ff2: Linear::new(ps, &format!("{name}.ff2"), cfg.ff_dim, cfg.model_dim, init),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, bind: &Binding, x: Node, maps: Option<&mut Vec<Node>>) -> Node {
        let h = self.ln1.forward(g, bind, x);
        let a = self.attn.forward(g, bind, h, maps);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, bind, x);
        let h = self.ff1.forward(g, bind, h);
        let h = g.gelu(h);
        let h = self.ff2.forward(g, bind, h);
        g.add(x, h)
    }
}

/// Patch embedding, its layer norm and a stack of blocks. Parameter names are
/// shared between teacher and student so weights can be copied by name.
#[derive(Clone, Debug)]
pub struct Trunk {
    pub embed: Linear,
    pub embed_ln: LayerNorm,
    pub blocks: Vec<Block>,
}

impl Trunk {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, cfg: &EncoderConfig, layers: usize, init: &mut Init) -> Self {
        let embed = Linear::new(ps, "embed", cfg.patch_dim(), cfg.model_dim, init);
        let embed_ln = LayerNorm::new(ps, "embed_ln", cfg.model_dim);
        let blocks = (0..layers).map(|i| Block::new(ps, &format!("layers.{i}"), cfg, init)).collect();
        Self { embed, embed_ln, blocks }
    }

    /// Output of every block, in order.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        bind: &Binding,
        patches: Node,
        mut maps: Option<&mut Vec<Node>>,
    ) -> Vec<Node> {
        let x = self.embed.forward(g, bind, patches);
        let mut x = self.embed_ln.forward(g, bind, x);
        let mut outs = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            x = b.forward(g, bind, x, maps.as_deref_mut());
            outs.push(x);
        }
        outs
    }
}

/// Per-layer encoder outputs, all the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutputs<T> {
    layers: Vec<Mat<T>>,
}

impl<T: Scalar> LayerOutputs<T> {
    pub fn new(layers: Vec<Mat<T>>) -> Result<Self> {
        let first = layers.first().ok_or(Error::Empty("layer outputs"))?.dim();
        if let Some(m) = layers.iter().find(|m| m.dim() != first) {
            return Err(Error::Shape(format!("layer output {:?} differs from {:?}", m.dim(), first)));
        }
        Ok(Self { layers })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Layer `i`, counted from 1.
    pub fn layer(&self, i: usize) -> &Mat<T> {
        &self.layers[i - 1]
    }

    pub fn last(&self) -> &Mat<T> {
        self.layers.last().expect("non-empty")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mat<T>> {
        self.layers.iter()
    }

    pub fn into_vec(self) -> Vec<Mat<T>> {
        self.layers
    }
}

/// The (teacher) encoder: configuration, weights and layout.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    cfg: EncoderConfig,
    params: ParamSet<T>,
    trunk: Trunk,
}

impl<T: Scalar> Encoder<T> {
    /// Randomly initialized encoder; the same `(cfg, seed)` always gives the same weights.
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut init = Init::new(derive_seed(seed, "encoder"));
        let trunk = Trunk::new(&mut params, &cfg, cfg.num_layers, &mut init);
        Ok(Self { cfg, params, trunk })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn trunk(&self) -> &Trunk {
        &self.trunk
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the forward pass on `g`; `fb` holds patches (see [`patchify`]).
    pub fn forward_graph<'a>(&'a self, g: &mut Graph<'a, T>, trainable: bool, patches: Node) -> Vec<Node> {
        let bind = self.params.bind(g, |_| trainable);
        self.trunk.forward(g, &bind, patches, None)
    }

    fn run(&self, fb: &FeatureMatrix<T>, want_maps: bool) -> Result<(LayerOutputs<T>, Vec<Mat<T>>)> {
        let patches = patchify(fb.data(), &self.cfg)?;
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, |_| false);
        let x = g.constant(patches);
        let mut maps = Vec::new();
        let outs = self.trunk.forward(&mut g, &bind, x, want_maps.then_some(&mut maps));
        let layers = LayerOutputs::new(outs.iter().map(|&n| g.value(n).clone()).collect())?;
        Ok((layers, maps.iter().map(|&n| g.value(n).clone()).collect()))
    }

    pub fn layer_outputs(&self, fb: &FeatureMatrix<T>) -> Result<LayerOutputs<T>> {
        Ok(self.run(fb, false)?.0)
    }

    /// Layer outputs plus every attention matrix, layer-major then head.
    pub fn forward_with_attention(&self, fb: &FeatureMatrix<T>) -> Result<(LayerOutputs<T>, Vec<Mat<T>>)> {
        self.run(fb, true)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut f = WeightFile::new(serde_json::json!({ "kind": "encoder", "config": self.cfg }));
        f.push_set("encoder", &self.params);
        f
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        if file.header.get("kind").and_then(|k| k.as_str()) != Some("encoder") {
            return Err(Error::Format("weight file does not hold an encoder".into()));
        }
        let cfg: EncoderConfig = serde_json::from_value(file.header["config"].clone())?;
        let mut enc = Self::new(cfg, 0)?;
        file.load_set("encoder", &mut enc.params)?;
        Ok(enc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Parameter count of a trunk with `layers` blocks.
pub fn trunk_param_count(cfg: &EncoderConfig, layers: usize) -> usize {
    let d = cfg.model_dim;
    let embed = cfg.patch_dim() * d + d + 2 * d;
    let block = 4 * (d * d + d) + 4 * d + (d * cfg.ff_dim + cfg.ff_dim) + (cfg.ff_dim * d + d);
    embed + layers * block
}
