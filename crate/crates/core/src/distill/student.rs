use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::features::{patchify, weighted_sum_graph, Encoder, EncoderConfig, FeatureMatrix, Trunk};
use crate::nn::{derive_seed, Binding, Init, Linear, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::weights::WeightFile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadTopology {
    /// One head predicting the final teacher layer.
    Single,
    /// Every head reads the last kept layer.
    MultiIndependent,
    /// Each head reads the previous head's prediction.
    MultiSequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fuse {
    LastHead,
    WeightedSum,
}

/// What the per-sample difficulty weight is derived from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DifficultySource {
    /// Cosine similarity of head predictions to teacher layers.
    Teacher,
    /// `1 − 2·|predicted − label|` of the clip score.
    Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub kept_layers: usize,
    pub head_topology: HeadTopology,
    pub tapped_teacher_layers: Vec<usize>,
    pub fuse: Fuse,
    pub finetune_predictor: bool,
    pub difficulty: DifficultySource,
    /// Scale of the second head layer at initialization.
    pub head_init_scale: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            kept_layers: 3,
            head_topology: HeadTopology::MultiIndependent,
            tapped_teacher_layers: vec![6, 9, 12],
            fuse: Fuse::WeightedSum,
            finetune_predictor: false,
            difficulty: DifficultySource::Teacher,
            head_init_scale: 0.1,
        }
    }
}

impl StudentConfig {
    /// Single-head variant tapping the last of `teacher_layers`.
    pub fn single(teacher_layers: usize) -> Self {
        Self {
            head_topology: HeadTopology::Single,
            tapped_teacher_layers: vec![teacher_layers],
            fuse: Fuse::LastHead,
            ..Self::default()
        }
    }

    pub fn validate(&self, teacher_layers: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("student: {m}")));
        if self.kept_layers == 0 || self.kept_layers > teacher_layers {
            return bad(format!("kept_layers {} for a {teacher_layers}-layer teacher", self.kept_layers));
        }
        let taps = &self.tapped_teacher_layers;
        if taps.is_empty() {
            return bad("no tapped layers".into());
        }
        if taps.iter().any(|&t| t == 0 || t > teacher_layers) {
            return bad(format!("taps {taps:?} outside 1..={teacher_layers}"));
        }
        if taps.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("taps {taps:?} not strictly ascending"));
        }
        if self.head_topology == HeadTopology::Single && taps != &[teacher_layers] {
            return bad(format!("single topology must tap only layer {teacher_layers}, got {taps:?}"));
        }
        if !(self.head_init_scale >= 0.0 && self.head_init_scale.is_finite()) {
            return bad(format!("head_init_scale {}", self.head_init_scale));
        }
        Ok(())
    }
}

/// Residual two-layer predictor: `x + fc2(GELU(fc1(x)))`.
#[derive(Clone, Copy, Debug)]
pub struct Head {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Head {
    fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, dim: usize, scale: f64, init: &mut Init) -> Self {
        let fc1 = Linear::new(ps, &format!("{name}.fc1"), dim, dim, init);
        let fc2 = Linear::new(ps, &format!("{name}.fc2"), dim, dim, init);
        ps.get_mut(fc2.w).mapv_inplace(|v| v * T::of(scale));
        Self { fc1, fc2 }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, bind: &Binding, x: Node) -> Node {
        let h = self.fc1.forward(g, bind, x);
        let h = g.gelu(h);
        let h = self.fc2.forward(g, bind, h);
        g.add(x, h)
    }
}

/// Node handles of one student forward pass.
#[derive(Clone, Debug)]
pub struct StudentNodes {
    /// Outputs of the kept layers.
    pub kept: Vec<Node>,
    /// One prediction per tapped teacher layer.
    pub heads: Vec<Node>,
    /// Input of the quality head.
    pub fused: Node,
}

/// Shallow encoder with per-layer prediction heads.
#[derive(Clone, Debug)]
pub struct Student<T> {
    enc_cfg: EncoderConfig,
    cfg: StudentConfig,
    params: ParamSet<T>,
    trunk: Trunk,
    heads: Vec<Head>,
    fuse_logits: Option<ParamId>,
}

impl<T: Scalar> Student<T> {
    /// Randomly initialized student for a teacher of shape `enc_cfg`.
    pub fn new(enc_cfg: EncoderConfig, cfg: StudentConfig, seed: u64) -> Result<Self> {
        enc_cfg.validate()?;
        cfg.validate(enc_cfg.num_layers)?;
        let mut params = ParamSet::new();
        let mut init = Init::new(derive_seed(seed, "student"));
        let trunk = Trunk::new(&mut params, &enc_cfg, cfg.kept_layers, &mut init);
        let mut head_init = Init::new(derive_seed(seed, "heads"));
        let heads = cfg
            .tapped_teacher_layers
            .iter()
            .map(|t| Head::new(&mut params, &format!("heads.{t}"), enc_cfg.model_dim, cfg.head_init_scale, &mut head_init))
            .collect();
        let fuse_logits = (cfg.fuse == Fuse::WeightedSum)
            .then(|| params.add("fuse.logits", Init::zeros(1, cfg.tapped_teacher_layers.len())));
        Ok(Self { enc_cfg, cfg, params, trunk, heads, fuse_logits })
    }

    pub fn config(&self) -> &StudentConfig {
        &self.cfg
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.enc_cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn forward_graph(&self, g: &mut Graph<'_, T>, bind: &Binding, patches: Node) -> StudentNodes {
        let kept = self.trunk.forward(g, bind, patches, None);
        let base = *kept.last().expect("at least one kept layer");
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut prev = base;
        for h in &self.heads {
            let input = match self.cfg.head_topology {
                HeadTopology::MultiSequential => prev,
                _ => base,
            };
            prev = h.forward(g, bind, input);
            heads.push(prev);
        }
        let fused = match self.fuse_logits {
            Some(id) => weighted_sum_graph(g, &heads, bind[id]),
            None => *heads.last().expect("at least one head"),
        };
        StudentNodes { kept, heads, fused }
    }

    /// Head predictions and fused feature for a filterbank.
    pub fn forward(&self, fb: &FeatureMatrix<T>) -> Result<(Vec<Mat<T>>, Mat<T>)> {
        let patches = patchify(fb.data(), &self.enc_cfg)?;
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, |_| false);
        let x = g.constant(patches);
        let out = self.forward_graph(&mut g, &bind, x);
        Ok((out.heads.iter().map(|&n| g.value(n).clone()).collect(), g.value(out.fused).clone()))
    }

    /// Outputs of the kept layers only.
    pub fn kept_outputs(&self, fb: &FeatureMatrix<T>) -> Result<Vec<Mat<T>>> {
        let patches = patchify(fb.data(), &self.enc_cfg)?;
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, |_| false);
        let x = g.constant(patches);
        let out = self.trunk.forward(&mut g, &bind, x, None);
        Ok(out.iter().map(|&n| g.value(n).clone()).collect())
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut f = WeightFile::new(serde_json::json!({
            "kind": "student",
            "encoder": self.enc_cfg,
            "student": self.cfg,
        }));
        f.push_set("student", &self.params);
        f
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        if file.header.get("kind").and_then(|k| k.as_str()) != Some("student") {
            return Err(Error::Format("weight file does not hold a student".into()));
        }
        let enc: EncoderConfig = serde_json::from_value(file.header["encoder"].clone())?;
        let cfg: StudentConfig = serde_json::from_value(file.header["student"].clone())?;
        let mut s = Self::new(enc, cfg, 0)?;
        file.load_set("student", &mut s.params)?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Student whose embedding and first `kept_layers` blocks are copied from
/// `teacher`; heads are seeded from `seed`.
pub fn transfer_init<T: Scalar>(teacher: &Encoder<T>, cfg: StudentConfig, seed: u64) -> Result<Student<T>> {
    let mut s = Student::new(teacher.config().clone(), cfg, seed)?;
    let kept = s.cfg.kept_layers;
    let copied = s.params.copy_matching(teacher.params(), |name| Some(name.to_string()))?;
    let expected = s.params.iter().filter(|p| !p.name.starts_with("heads.") && !p.name.starts_with("fuse.")).count();
    if copied != expected {
        return Err(Error::Shape(format!("copied {copied} of {expected} trunk tensors for {kept} layers")));
    }
    Ok(s)
}
