use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mat, Node};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::features::{patchify, prep_fbank, Encoder, FeatureMatrix};
use crate::nn::{derive_seed, Adam, AdamConfig, Binding};
use crate::predictor::{is_blstm_or_attention, normalize_hearing_loss, quality_loss_graph, QualityModel, QualityPrediction, ScoreNodes};
use crate::scalar::Scalar;
use crate::weights::WeightFile;

use super::loss::{cosine_similarity, difficulty_graph, distill_loss_graph, layer_loss_graph, total_loss_graph};
use super::student::{DifficultySource, Student, StudentNodes};

/// One clip prepared for distillation: student patches, frozen teacher
/// targets for every tapped layer, hearing loss and quality label.
#[derive(Clone, Debug)]
pub struct DistillExample<T> {
    pub id: String,
    pub patches: Mat<T>,
    pub teacher: Vec<Mat<T>>,
    pub hearing_loss: [f64; 8],
    pub target: f64,
}

impl<T: Scalar> DistillExample<T> {
    /// Runs the frozen teacher once and keeps the tapped layers.
    pub fn prepare(
        teacher: &Encoder<T>,
        taps: &[usize],
        id: impl Into<String>,
        w: &Waveform<T>,
        hearing_loss: [f64; 8],
        target: f64,
    ) -> Result<Self> {
        let fb = prep_fbank(w, teacher.config().mel_bins)?;
        Self::from_fbank(teacher, taps, id, &fb, hearing_loss, target)
    }

    pub fn from_fbank(
        teacher: &Encoder<T>,
        taps: &[usize],
        id: impl Into<String>,
        fb: &FeatureMatrix<T>,
        hearing_loss: [f64; 8],
        target: f64,
    ) -> Result<Self> {
        let layers = teacher.layer_outputs(fb)?;
        if let Some(&t) = taps.iter().find(|&&t| t == 0 || t > layers.len()) {
            return Err(Error::OutOfRange(format!("tap {t} of a {}-layer teacher", layers.len())));
        }
        Ok(Self {
            id: id.into(),
            patches: patchify(fb.data(), teacher.config())?,
            teacher: taps.iter().map(|&t| layers.layer(t).clone()).collect(),
            hearing_loss,
            target,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self { adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() }, batch_size: 8, steps: 300, seed: 0 }
    }
}

/// Losses and similarities of one optimiser step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub l_qual: f64,
    pub l_distil: f64,
    /// Batch-mean cosine similarity per tapped layer.
    pub cos: Vec<f64>,
    pub mean_d: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub taps: Vec<usize>,
    pub records: Vec<StepRecord>,
    /// Mean similarity per tapped layer on the training data after the last step.
    pub final_similarity: Vec<f64>,
}

impl DistillReport {
    /// `step,L_qual,L_distil,cos<tap>...,mean_d`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,L_qual,L_distil");
        for t in &self.taps {
            let _ = write!(s, ",cos{t}");
        }
        s.push_str(",mean_d\n");
        for r in &self.records {
            let _ = write!(s, "{},{},{}", r.step, r.l_qual, r.l_distil);
            for c in &r.cos {
                let _ = write!(s, ",{c}");
            }
            let _ = writeln!(s, ",{}", r.mean_d);
        }
        s
    }
}

/// Student plus the quality head it feeds.
#[derive(Clone, Debug)]
pub struct DistilledModel<T> {
    pub student: Student<T>,
    pub quality: QualityModel<T>,
}

impl<T: Scalar> DistilledModel<T> {
    pub fn new(student: Student<T>, quality: QualityModel<T>) -> Result<Self> {
        let width = student.encoder_config().model_dim;
        if !quality.config().features.uses_encoder() || quality.config().model_dim != width {
            return Err(Error::InvalidConfig(format!("quality head does not accept {width}-wide encoder features")));
        }
        Ok(Self { student, quality })
    }

    fn scores(
        &self,
        g: &mut Graph<'_, T>,
        sb: &Binding,
        qb: &Binding,
        patches: Node,
        hl: &[f64; 8],
    ) -> Result<(StudentNodes, ScoreNodes)> {
        let out = self.student.forward_graph(g, sb, patches);
        let ac = self.quality.project(g, qb, out.fused)?;
        let scores = self.quality.score(g, qb, ac, hl, None)?;
        Ok((out, scores))
    }

    pub fn predict_patches(&self, patches: &Mat<T>, hearing_loss: [f64; 8]) -> Result<QualityPrediction> {
        let hl = normalize_hearing_loss(&hearing_loss)?;
        let mut g = Graph::new();
        let sb = self.student.params().bind(&mut g, |_| false);
        let qb = self.quality.params().bind(&mut g, |_| false);
        let x = g.constant(patches.clone());
        let (_, s) = self.scores(&mut g, &sb, &qb, x, &hl)?;
        Ok(QualityPrediction {
            clip_score: g.item(s.clip).to_f64_lossy(),
            frame_scores: g.value(s.frames).iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }

    pub fn predict(&self, w: &Waveform<T>, hearing_loss: [f64; 8]) -> Result<QualityPrediction> {
        let fb = prep_fbank(w, self.student.encoder_config().mel_bins)?;
        self.predict_patches(&patchify(fb.data(), self.student.encoder_config())?, hearing_loss)
    }

    /// Fused student encoder output for `w`.
    pub fn encode(&self, w: &Waveform<T>) -> Result<Mat<T>> {
        let fb = prep_fbank(w, self.student.encoder_config().mel_bins)?;
        Ok(self.student.forward(&fb)?.1)
    }

    /// Quality prediction from an [`encode`](Self::encode) output.
    pub fn predict_encoded(&self, fused: &Mat<T>, hearing_loss: [f64; 8]) -> Result<QualityPrediction> {
        let hl = normalize_hearing_loss(&hearing_loss)?;
        let mut g = Graph::new();
        let qb = self.quality.params().bind(&mut g, |_| false);
        let x = g.constant(fused.clone());
        let ac = self.quality.project(&mut g, &qb, x)?;
        let s = self.quality.score(&mut g, &qb, ac, &hl, None)?;
        Ok(QualityPrediction {
            clip_score: g.item(s.clip).to_f64_lossy(),
            frame_scores: g.value(s.frames).iter().map(|v| v.to_f64_lossy()).collect(),
        })
    }

    pub fn num_params(&self) -> usize {
        self.student.num_params() + self.quality.params().num_scalars()
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let s = self.student.to_weight_file();
        let q = self.quality.to_weight_file();
        let mut f = WeightFile::new(serde_json::json!({
            "kind": "distilled",
            "encoder": s.header["encoder"],
            "student": s.header["student"],
            "predictor": q.header["config"],
        }));
        f.tensors = s.tensors.into_iter().chain(q.tensors).collect();
        f
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        if file.header.get("kind").and_then(|k| k.as_str()) != Some("distilled") {
            return Err(Error::Format("weight file does not hold a distilled model".into()));
        }
        let mut s = file.clone();
        s.header = serde_json::json!({ "kind": "student", "encoder": file.header["encoder"], "student": file.header["student"] });
        let mut q = file.clone();
        q.header = serde_json::json!({ "kind": "quality-model", "config": file.header["predictor"] });
        Self::new(Student::from_weight_file(&s)?, QualityModel::from_weight_file(&q)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Which quality-head parameters move during distillation.
pub fn quality_trainable(finetune_predictor: bool) -> impl Fn(&str) -> bool {
    move |name: &str| finetune_predictor || !is_blstm_or_attention(name)
}

pub(super) struct BatchOutcome<T> {
    pub(super) student_grads: Vec<Option<Mat<T>>>,
    pub(super) quality_grads: Vec<Option<Mat<T>>>,
    pub(super) record: StepRecord,
}

pub(super) fn batch_step<T: Scalar>(model: &DistilledModel<T>, batch: &[&DistillExample<T>], step: usize) -> Result<BatchOutcome<T>> {
    let cfg = model.student.config();
    let taps = cfg.tapped_teacher_layers.len();
    let mut g = Graph::new();
    let sb = model.student.params().bind(&mut g, |_| true);
    let qb = model.quality.params().bind(&mut g, quality_trainable(cfg.finetune_predictor));
    let mut scores = Vec::with_capacity(batch.len());
    let mut losses = Vec::with_capacity(batch.len());
    let mut weights = Vec::with_capacity(batch.len());
    let mut sims = vec![0.0; taps];
    let mut d_sum = 0.0;
    for e in batch {
        if e.teacher.len() != taps {
            return Err(Error::LengthMismatch { left: e.teacher.len(), right: taps });
        }
        let hl = normalize_hearing_loss(&e.hearing_loss)?;
        let x = g.constant(e.patches.clone());
        let (out, s) = model.scores(&mut g, &sb, &qb, x, &hl)?;
        let mut totals = Vec::with_capacity(taps);
        let mut ss = Vec::with_capacity(taps);
        for (k, (&pred, target)) in out.heads.iter().zip(&e.teacher).enumerate() {
            let t = g.constant(target.clone());
            let l = layer_loss_graph(&mut g, t, pred)?;
            sims[k] += g.item(l.similarity).to_f64_lossy();
            totals.push(l.total);
            ss.push(l.similarity);
        }
        let d = match cfg.difficulty {
            DifficultySource::Teacher => difficulty_graph(&mut g, &ss)?,
            DifficultySource::Label => {
                let diff = g.add_scalar(s.clip, T::of(-e.target));
                let a = g.abs(diff);
                let a2 = g.scale(a, T::of(-2.0));
                let sim = g.add_scalar(a2, T::one());
                difficulty_graph(&mut g, &[sim])?
            }
        };
        d_sum += g.item(d).to_f64_lossy();
        losses.push(totals);
        weights.push(d);
        scores.push(s);
    }
    let truth: Vec<f64> = batch.iter().map(|e| e.target).collect();
    let lq = quality_loss_graph(&mut g, &truth, &scores)?;
    let ld = distill_loss_graph(&mut g, &losses, &weights)?;
    let total = total_loss_graph(&mut g, lq, ld);
    let (lqv, ldv) = (g.item(lq).to_f64_lossy(), g.item(ld).to_f64_lossy());
    if !lqv.is_finite() || !ldv.is_finite() {
        let ids: Vec<&str> = batch.iter().map(|e| e.id.as_str()).collect();
        return Err(Error::NonFinite(format!("step {step}: L_qual {lqv}, L_distil {ldv} on batch {ids:?}")));
    }
    let mut grads = g.backward(total);
    let n = batch.len() as f64;
    Ok(BatchOutcome {
        student_grads: sb.collect(&mut grads),
        quality_grads: qb.collect(&mut grads),
        record: StepRecord {
            step,
            l_qual: lqv,
            l_distil: ldv,
            cos: sims.iter().map(|s| s / n).collect(),
            mean_d: d_sum / n,
        },
    })
}

/// Losses and similarities on `batch` without updating any weights.
pub fn objective<T: Scalar>(model: &DistilledModel<T>, batch: &[&DistillExample<T>]) -> Result<StepRecord> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    Ok(batch_step(model, batch, 0)?.record)
}

/// Mean cosine similarity per tapped layer over `data`.
pub fn layer_similarities<T: Scalar>(student: &Student<T>, data: &[DistillExample<T>]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("examples"));
    }
    let taps = student.config().tapped_teacher_layers.len();
    let mut acc = vec![0.0; taps];
    for e in data {
        let mut g = Graph::new();
        let bind = student.params().bind(&mut g, |_| false);
        let x = g.constant(e.patches.clone());
        let out = student.forward_graph(&mut g, &bind, x);
        for (k, (&h, t)) in out.heads.iter().zip(&e.teacher).enumerate() {
            acc[k] += cosine_similarity(t, g.value(h))?;
        }
    }
    Ok(acc.into_iter().map(|s| s / data.len() as f64).collect())
}

/// Optimises the combined quality and distillation objective.
pub fn distill_train<T: Scalar>(
    model: &mut DistilledModel<T>,
    data: &[DistillExample<T>],
    cfg: &DistillConfig,
) -> Result<DistillReport> {
    if data.is_empty() {
        return Err(Error::Empty("distillation set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    let mut report = DistillReport { taps: model.student.config().tapped_teacher_layers.clone(), ..Default::default() };
    let mut s_adam = Adam::new(cfg.adam, model.student.params());
    let mut q_adam = Adam::new(cfg.adam, model.quality.params());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "distill-shuffle"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut pos = order.len();
    for step in 1..=cfg.steps {
        if pos + cfg.batch_size > order.len() {
            order.shuffle(&mut rng);
            pos = 0;
        }
        let end = (pos + cfg.batch_size).min(order.len());
        let batch: Vec<&DistillExample<T>> = order[pos..end].iter().map(|&i| &data[i]).collect();
        pos = end;
        let out = batch_step(model, &batch, step)?;
        s_adam.step(model.student.params_mut(), &out.student_grads);
        q_adam.step(model.quality.params_mut(), &out.quality_grads);
        report.records.push(out.record);
    }
    if !model.student.params().all_finite() || !model.quality.params().all_finite() {
        return Err(Error::NonFinite("distilled weights".into()));
    }
    report.final_similarity = layer_similarities(&model.student, data)?;
    Ok(report)
}
