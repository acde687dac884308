//! BLSTM → FC+ReLU → multi-head self-attention → per-frame sigmoid → mean.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mat, Node};
use crate::error::{Error, Result};
use crate::features::{ADAPTED_DIM, SPEC_BINS};
use crate::nn::{derive_seed, Binding, Init, Linear, MultiHeadAttention, ParamId, ParamSet};
use crate::scalar::Scalar;
use crate::weights::WeightFile;

/// Number of audiogram thresholds appended to every frame.
pub const HL_DIM: usize = 8;
/// Thresholds are divided by this before concatenation.
pub const HL_SCALE: f64 = 100.0;

/// What the predictor sees as its acoustic input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Log-compressed magnitude spectrogram.
    Spectrogram,
    /// Last encoder layer, window-averaged.
    EncoderLast,
    /// Last encoder layer through the adapter.
    EncoderLastAdapter,
    /// Softmax-weighted sum of all layers through the adapter.
    EncoderWsAdapter,
}

impl FeatureKind {
    pub fn uses_encoder(self) -> bool {
        self != FeatureKind::Spectrogram
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub features: FeatureKind,
    /// Encoder width and depth (ignored for spectrogram input).
    pub model_dim: usize,
    pub num_layers: usize,
    /// Width of adapted (or spectrogram) frames.
    pub adapted_dim: usize,
    /// Window for [`FeatureKind::EncoderLast`].
    pub window: usize,
    pub lstm_hidden: usize,
    pub fc_dim: usize,
    pub att_heads: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            features: FeatureKind::EncoderWsAdapter,
            model_dim: 96,
            num_layers: 12,
            adapted_dim: ADAPTED_DIM,
            window: 3,
            lstm_hidden: 128,
            fc_dim: 256,
            att_heads: 16,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("predictor: {m}")));
        if self.lstm_hidden == 0 || self.fc_dim == 0 || self.adapted_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.att_heads == 0 || !self.fc_dim.is_multiple_of(self.att_heads) {
            return bad(format!("fc_dim {} not divisible by {} heads", self.fc_dim, self.att_heads));
        }
        if self.features.uses_encoder() && (self.model_dim == 0 || self.num_layers == 0) {
            return bad("encoder features need model_dim and num_layers".into());
        }
        if self.features == FeatureKind::EncoderLast && (self.window == 0 || self.window > self.model_dim) {
            return bad(format!("window {} for model_dim {}", self.window, self.model_dim));
        }
        if self.features == FeatureKind::Spectrogram && self.adapted_dim != SPEC_BINS {
            // small widths are allowed for tests; nothing else to check
        }
        Ok(())
    }

    /// Width of the acoustic part of each predictor frame.
    pub fn acoustic_dim(&self) -> usize {
        match self.features {
            FeatureKind::EncoderLast => self.model_dim / self.window,
            _ => self.adapted_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.acoustic_dim() + HL_DIM
    }
}

/// Acoustic input of one clip, before any trainable front end.
#[derive(Clone, Debug, PartialEq)]
pub enum Acoustic<T> {
    /// `T × adapted_dim` frames (already compressed).
    Frames(Mat<T>),
    /// Encoder layer outputs, first to last.
    Layers(Vec<Mat<T>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipInput<T> {
    pub acoustic: Acoustic<T>,
    /// Audiogram thresholds in dB HL.
    pub hearing_loss: [f64; 8],
}

/// Thresholds scaled to the predictor's range, checked against `[0, 1.2]`.
pub fn normalize_hearing_loss(thresholds: &[f64; 8]) -> Result<[f64; 8]> {
    let mut out = [0.0; 8];
    for (o, &h) in out.iter_mut().zip(thresholds) {
        *o = h / HL_SCALE;
        if !(0.0..=1.2).contains(o) {
            return Err(Error::OutOfRange(format!("hearing threshold {h} dB HL")));
        }
    }
    Ok(out)
}

impl<T: Scalar> ClipInput<T> {
    pub fn normalized_hearing_loss(&self) -> Result<[f64; 8]> {
        normalize_hearing_loss(&self.hearing_loss)
    }
}

/// Clip score and per-frame scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityPrediction {
    pub clip_score: f64,
    pub frame_scores: Vec<f64>,
}

/// Single-direction LSTM with precomputed input projection.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    pub wx: Linear,
    pub wh: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar>(ps: &mut ParamSet<T>, name: &str, input: usize, hidden: usize, init: &mut Init) -> Self {
        let wx = Linear::new(ps, &format!("{name}.wx"), input, 4 * hidden, init);
        // forget-gate bias starts at one
        let b = ps.get_mut(wx.b);
        for j in hidden..2 * hidden {
            b[[0, j]] = T::one();
        }
        let wh = ps.add(format!("{name}.wh"), init.xavier(hidden, 4 * hidden));
        Self { wx, wh, hidden }
    }

    /// Hidden states for every frame (`T × hidden`), in input order.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, bind: &Binding, x: Node, reverse: bool) -> Node {
        let frames = g.shape(x).0;
        let h_dim = self.hidden;
        let xp = self.wx.forward(g, bind, x);
        let mut h = g.constant(Mat::zeros((1, h_dim)));
        let mut c = g.constant(Mat::zeros((1, h_dim)));
        let mut states = vec![h; frames];
        let order: Vec<usize> = if reverse { (0..frames).rev().collect() } else { (0..frames).collect() };
        for t in order {
            let xt = g.slice_rows(xp, t, t + 1);
            let rec = g.matmul(h, bind[self.wh]);
            let z = g.add(xt, rec);
            let sig = g.sigmoid(z);
            let i = g.slice_cols(sig, 0, h_dim);
            let f = g.slice_cols(sig, h_dim, 2 * h_dim);
            let o = g.slice_cols(sig, 3 * h_dim, 4 * h_dim);
            let zg = g.slice_cols(z, 2 * h_dim, 3 * h_dim);
            let cand = g.tanh(zg);
            let keep = g.mul(f, c);
            let write = g.mul(i, cand);
            c = g.add(keep, write);
            let tc = g.tanh(c);
            h = g.mul(o, tc);
            states[t] = h;
        }
        g.concat_rows(&states)
    }
}

#[derive(Clone, Debug)]
struct Layout {
    ws_logits: Option<ParamId>,
    adapter: Option<Linear>,
    fw: Lstm,
    bw: Lstm,
    fc: Linear,
    att: MultiHeadAttention,
    out: Linear,
}

/// Output nodes of one clip's forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ScoreNodes {
    /// `T × 1` frame scores.
    pub frames: Node,
    /// `1 × 1` clip score.
    pub clip: Node,
}

/// Trainable front end (layer weights, adapter) plus the quality head.
#[derive(Clone, Debug)]
pub struct QualityModel<T> {
    cfg: PredictorConfig,
    params: ParamSet<T>,
    layout: Layout,
}

/// Names of the recurrent and attention parameters.
pub fn is_blstm_or_attention(name: &str) -> bool {
    name.starts_with("blstm.") || name.starts_with("att.")
}

impl<T: Scalar> QualityModel<T> {
    pub fn new(cfg: PredictorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let mut init = Init::new(derive_seed(seed, "predictor"));
        let ws_logits =
            (cfg.features == FeatureKind::EncoderWsAdapter).then(|| ps.add("ws.logits", Init::zeros(1, cfg.num_layers)));
        let adapter = matches!(cfg.features, FeatureKind::EncoderLastAdapter | FeatureKind::EncoderWsAdapter)
            .then(|| Linear::new(&mut ps, "adapter", cfg.model_dim, cfg.adapted_dim, &mut init));
        let input = cfg.input_dim();
        let fw = Lstm::new(&mut ps, "blstm.fw", input, cfg.lstm_hidden, &mut init);
        let bw = Lstm::new(&mut ps, "blstm.bw", input, cfg.lstm_hidden, &mut init);
        let fc = Linear::new(&mut ps, "fc", 2 * cfg.lstm_hidden, cfg.fc_dim, &mut init);
        let att = MultiHeadAttention::new(&mut ps, "att", cfg.fc_dim, cfg.att_heads, &mut init);
        let out = Linear::new(&mut ps, "out", cfg.fc_dim, 1, &mut init);
        Ok(Self { cfg, params: ps, layout: Layout { ws_logits, adapter, fw, bw, fc, att, out } })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Output layer, exposed so tests and callers can set it directly.
    pub fn output_layer(&self) -> Linear {
        self.layout.out
    }

    pub fn adapter(&self) -> Option<Linear> {
        self.layout.adapter
    }

    pub fn ws_logits(&self) -> Option<ParamId> {
        self.layout.ws_logits
    }

    /// Encoder layers → pre-adapter feature (weighted sum or last layer).
    pub fn fuse_layers(&self, g: &mut Graph<'_, T>, bind: &Binding, layers: &[Node]) -> Result<Node> {
        if layers.len() != self.cfg.num_layers {
            return Err(Error::LengthMismatch { left: layers.len(), right: self.cfg.num_layers });
        }
        Ok(match self.layout.ws_logits {
            Some(id) => crate::features::weighted_sum_graph(g, layers, bind[id]),
            None => *layers.last().expect("non-empty"),
        })
    }

    /// Pre-adapter feature → acoustic frames (adapter or window average).
    pub fn project(&self, g: &mut Graph<'_, T>, bind: &Binding, fused: Node) -> Result<Node> {
        let (_, width) = g.shape(fused);
        if width != self.cfg.model_dim {
            return Err(Error::Shape(format!("fused width {width}, expected {}", self.cfg.model_dim)));
        }
        Ok(match (self.cfg.features, self.layout.adapter) {
            (_, Some(a)) => a.forward(g, bind, fused),
            (FeatureKind::EncoderLast, None) => {
                let k = self.cfg.window;
                let out = self.cfg.model_dim / k;
                let avg = Mat::from_shape_fn((self.cfg.model_dim, out), |(r, c)| {
                    if r / k == c && r < out * k {
                        T::one() / T::of(k as f64)
                    } else {
                        T::zero()
                    }
                });
                let a = g.constant(avg);
                g.matmul(fused, a)
            }
            _ => unreachable!("spectrogram input has no projection"),
        })
    }

    /// Acoustic frames of a clip as a node.
    pub fn acoustic(&self, g: &mut Graph<'_, T>, bind: &Binding, input: &Acoustic<T>) -> Result<Node> {
        match (self.cfg.features, input) {
            (FeatureKind::Spectrogram, Acoustic::Frames(m)) => {
                if m.ncols() != self.cfg.adapted_dim {
                    return Err(Error::Shape(format!("{} frame features, expected {}", m.ncols(), self.cfg.adapted_dim)));
                }
                Ok(g.constant(m.clone()))
            }
            (k, Acoustic::Layers(layers)) if k.uses_encoder() => {
                let nodes: Vec<Node> = layers.iter().map(|m| g.constant(m.clone())).collect();
                let fused = self.fuse_layers(g, bind, &nodes)?;
                self.project(g, bind, fused)
            }
            (k, _) => Err(Error::InvalidConfig(format!("input kind does not match {k:?} features"))),
        }
    }

    /// Quality head on `T × acoustic_dim` frames.
    pub fn score(
        &self,
        g: &mut Graph<'_, T>,
        bind: &Binding,
        acoustic: Node,
        hearing_loss: &[f64; 8],
        maps: Option<&mut Vec<Node>>,
    ) -> Result<ScoreNodes> {
        let (frames, width) = g.shape(acoustic);
        if width != self.cfg.acoustic_dim() {
            return Err(Error::Shape(format!("acoustic width {width}, expected {}", self.cfg.acoustic_dim())));
        }
        if frames == 0 {
            return Err(Error::Empty("frames"));
        }
        let hl = g.constant(Mat::from_shape_fn((frames, HL_DIM), |(_, j)| T::of(hearing_loss[j])));
        let x = g.concat_cols(&[acoustic, hl]);
        let l = &self.layout;
        let hf = l.fw.forward(g, bind, x, false);
        let hb = l.bw.forward(g, bind, x, true);
        let h = g.concat_cols(&[hf, hb]);
        let h = l.fc.forward(g, bind, h);
        let h = g.relu(h);
        let a = l.att.forward(g, bind, h, maps);
        let h = g.add(h, a);
        let logits = l.out.forward(g, bind, h);
        let frames = g.sigmoid(logits);
        let clip = g.mean(frames);
        Ok(ScoreNodes { frames, clip })
    }

    /// Full forward pass of one clip on `g`.
    pub fn forward_graph(&self, g: &mut Graph<'_, T>, bind: &Binding, input: &ClipInput<T>) -> Result<ScoreNodes> {
        let hl = input.normalized_hearing_loss()?;
        let ac = self.acoustic(g, bind, &input.acoustic)?;
        self.score(g, bind, ac, &hl, None)
    }

    fn run(&self, input: &ClipInput<T>, want_maps: bool) -> Result<(QualityPrediction, Vec<Mat<T>>)> {
        if !self.params.all_finite() {
            return Err(Error::NonFinite("predictor weights".into()));
        }
        let mut g = Graph::new();
        let bind = self.params.bind(&mut g, |_| false);
        let hl = input.normalized_hearing_loss()?;
        let ac = self.acoustic(&mut g, &bind, &input.acoustic)?;
        let mut maps = Vec::new();
        let s = self.score(&mut g, &bind, ac, &hl, want_maps.then_some(&mut maps))?;
        let frame_scores: Vec<f64> = g.value(s.frames).iter().map(|v| v.to_f64_lossy()).collect();
        let pred = QualityPrediction { clip_score: g.item(s.clip).to_f64_lossy(), frame_scores };
        Ok((pred, maps.iter().map(|&n| g.value(n).clone()).collect()))
    }

    pub fn predict(&self, input: &ClipInput<T>) -> Result<QualityPrediction> {
        Ok(self.run(input, false)?.0)
    }

    /// Prediction plus the per-head attention matrices.
    pub fn forward_with_attention(&self, input: &ClipInput<T>) -> Result<(QualityPrediction, Vec<Mat<T>>)> {
        self.run(input, true)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut f = WeightFile::new(serde_json::json!({ "kind": "quality-model", "config": self.cfg }));
        f.push_set("predictor", &self.params);
        f
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        if file.header.get("kind").and_then(|k| k.as_str()) != Some("quality-model") {
            return Err(Error::Format("weight file does not hold a quality model".into()));
        }
        let cfg: PredictorConfig = serde_json::from_value(file.header["config"].clone())?;
        let mut m = Self::new(cfg, 0)?;
        file.load_set("predictor", &mut m.params)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}
