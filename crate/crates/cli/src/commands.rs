//! Subcommand implementations. Each writes its artifacts into a fresh run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use haaqi::audiogram::{AudiogramBank, Category};
use haaqi::distill::{distill_train, transfer_init, DistillExample, DistilledModel};
use haaqi::dsp::{wav, Waveform};
use haaqi::eval::{anchor_curve, bench_runtime, evaluate_scored, spl_sweep, ScoredClip, Variant};
use haaqi::features::Encoder;
use haaqi::nn::derive_seed;
use haaqi::predictor::{clip_input, train_with_validation, write_predictions, Example, QualityModel, TrainReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{
    BenchArgs, BuildArgs, Command, CorpusCommand, DistillArgs, EvalArgs, GlobalArgs, LabelArgs, PlotDataArgs, SplSweepArgs, TrainArgs,
    VariantArg,
};
use crate::config::RunConfig;
use crate::label::label_scores;
use crate::manifest::{read_scores, scores_csv, Manifest, ManifestRow, Split};
use crate::model::{Model, DISTILLED_FILE, ENCODER_FILE, PREDICTOR_FILE};
use crate::parallel::{default_jobs, map_ordered};
use crate::runs::{RunDir, RUN_FILE};
use crate::corpus;

/// Everything a subcommand needs: resolved config, its run directory and thread count.
pub struct RunContext {
    pub cfg: RunConfig,
    pub run: RunDir,
    pub jobs: usize,
}

/// Loads `--config` (or defaults when only `--seed` is given) and applies `--seed`.
pub fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let cfg = match (&g.config, g.seed) {
        (Some(p), seed) => {
            let c = RunConfig::load(p)?;
            let s = seed.unwrap_or(c.seed);
            c.with_seed(s)
        }
        (None, Some(s)) => {
            let text = format!("seed = {s}\n");
            RunConfig::from_toml(&text)?.with_seed(s)
        }
        (None, None) => bail!("a master seed is required: pass --seed or a --config that sets `seed`"),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
}

/// Creates the run directory, writes the config snapshot and dispatches.
pub fn execute(cmd: &Command, cfg: RunConfig, root: &Path, jobs: Option<usize>) -> Result<(RunDir, Result<()>)> {
    let run = RunDir::create(root, cmd.name())?;
    run.snapshot(&cfg)?;
    run.write_json(RUN_FILE, &RunInfo { command: cmd.name(), seed: cfg.seed, version: env!("CARGO_PKG_VERSION") })?;
    let mut ctx = RunContext { cfg, run: run.clone(), jobs: jobs.unwrap_or_else(default_jobs).max(1) };
    let result = match cmd {
        Command::Corpus(CorpusCommand::Build(a)) => corpus_build(&mut ctx, a),
        Command::Corpus(CorpusCommand::Audiograms) => corpus_audiograms(&ctx),
        Command::Label(a) => label(&ctx, a),
        Command::Train(a) => train(&mut ctx, a),
        Command::Distill(a) => distill(&mut ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::SplSweep(a) => sweep(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::PlotData(a) => plot_data(&ctx, a),
    };
    Ok((run, result))
}

#[derive(Serialize)]
struct CorpusSummary {
    rows: usize,
    clips: usize,
    splits: BTreeMap<&'static str, usize>,
}

fn split_counts(rows: &[ManifestRow]) -> BTreeMap<&'static str, usize> {
    Split::ALL.iter().map(|s| (s.name(), rows.iter().filter(|r| r.split == *s).count())).collect()
}

fn corpus_build(ctx: &mut RunContext, a: &BuildArgs) -> Result<()> {
    if let Some(d) = &a.clean_dir {
        ctx.cfg.corpus.clean_dir = Some(d.clone());
        ctx.cfg.validate()?;
        ctx.run.snapshot(&ctx.cfg)?;
    }
    let m = corpus::build(&ctx.cfg.corpus, ctx.cfg.seed, &ctx.run.path, ctx.jobs)?;
    let clips = m.rows.iter().map(|r| &r.clean_path).collect::<std::collections::HashSet<_>>().len();
    ctx.run.write_json("summary.json", &CorpusSummary { rows: m.rows.len(), clips, splits: split_counts(&m.rows) })
}

fn corpus_audiograms(ctx: &RunContext) -> Result<()> {
    let c = &ctx.cfg.corpus;
    let bank = AudiogramBank::generate(derive_seed(ctx.cfg.seed, "audiograms"), c.audiograms_per_category, c.train_audiograms_per_category);
    bank.save(ctx.run.join(crate::manifest::AUDIOGRAMS_FILE))?;
    let mut s = String::from("category,count,train,test\n");
    for cat in Category::ALL {
        let ids: Vec<&str> = bank.entries.iter().filter(|(_, a)| a.category() == cat).map(|(i, _)| i.as_str()).collect();
        let train = ids.iter().filter(|i| bank.split_of(i).ok() == Some(haaqi::audiogram::AudiogramSplit::Train)).count();
        s.push_str(&format!("{},{},{train},{}\n", cat.name(), ids.len(), ids.len() - train));
    }
    ctx.run.write("categories.csv", s)
}

fn label(ctx: &RunContext, a: &LabelArgs) -> Result<()> {
    let m = Manifest::load(&a.manifest)?;
    let scores = match &a.scores {
        Some(p) => Some(read_scores(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => None,
    };
    let labeled = label_scores(&m, a.provider.into(), scores.as_ref(), ctx.jobs)?;
    let out = labeled.relocated(&ctx.run.path)?;
    out.save(&ctx.run.path)?;
    ctx.run.write("scores.csv", scores_csv(&out.rows))
}

pub fn load_wave(m: &Manifest, r: &ManifestRow) -> Result<Waveform<f64>> {
    let p = m.resolve(&r.audio_path);
    wav::read(&p).with_context(|| format!("reading {}", p.display()))
}

fn teacher_encoder(cfg: &RunConfig) -> Result<Encoder<f64>> {
    match &cfg.paths.encoder {
        Some(p) => {
            let e = Encoder::load(p).with_context(|| format!("loading {}", p.display()))?;
            let (c, want) = (e.config(), &cfg.predictor);
            if want.features.uses_encoder() && (c.model_dim != want.model_dim || c.num_layers != want.num_layers) {
                bail!("{} is {}x{} but the predictor expects {}x{}", p.display(), c.num_layers, c.model_dim, want.num_layers, want.model_dim);
            }
            Ok(e)
        }
        None => Ok(Encoder::new(cfg.encoder.clone(), derive_seed(cfg.seed, "encoder"))?),
    }
}

fn labeled_examples(m: &Manifest, rows: &[&ManifestRow], model: &QualityModel<f64>, enc: Option<&Encoder<f64>>, jobs: usize) -> Result<Vec<Example<f64>>> {
    let kind = model.config().features;
    map_ordered(rows, jobs, |r| -> Result<Example<f64>> {
        let w = load_wave(m, r)?;
        Ok(Example { id: r.clip_id.clone(), input: clip_input(kind, enc, &w, m.thresholds(r)?)?, target: Manifest::score(r)? })
    })
    .into_iter()
    .collect()
}

fn loss_csv(r: &TrainReport) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in r.step_losses.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    s
}

fn epoch_csv(r: &TrainReport) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (i, t) in r.epoch_train_losses.iter().enumerate() {
        let v = r.epoch_val_losses.get(i).map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{t},{v}\n", i + 1));
    }
    s
}

fn train(ctx: &mut RunContext, a: &TrainArgs) -> Result<()> {
    if let Some(n) = a.steps {
        ctx.cfg.train.max_steps = Some(n);
        ctx.run.snapshot(&ctx.cfg)?;
    }
    let cfg = &ctx.cfg;
    let m = Manifest::load(&a.manifest)?;
    let model = match &a.init {
        Some(p) => {
            let q = QualityModel::load(p).with_context(|| format!("loading {}", p.display()))?;
            if q.config() != &cfg.predictor {
                bail!("{} has a different predictor architecture than the config", p.display());
            }
            q
        }
        None => QualityModel::new(cfg.predictor.clone(), derive_seed(cfg.train.seed, "init"))?,
    };
    let encoder = if cfg.predictor.features.uses_encoder() { Some(teacher_encoder(cfg)?) } else { None };
    let train_rows = m.rows_in(&[Split::Train]);
    let valid_rows = m.rows_in(&[Split::Valid]);
    if train_rows.is_empty() {
        bail!("manifest has no train rows");
    }
    let tr = labeled_examples(&m, &train_rows, &model, encoder.as_ref(), ctx.jobs)?;
    let va = labeled_examples(&m, &valid_rows, &model, encoder.as_ref(), ctx.jobs)?;
    let mut model = model;
    let report = train_with_validation(&mut model, &tr.iter().collect::<Vec<_>>(), &va.iter().collect::<Vec<_>>(), &cfg.train)?;
    model.save(ctx.run.join(PREDICTOR_FILE))?;
    if let Some(e) = &encoder {
        e.save(ctx.run.join(ENCODER_FILE))?;
    }
    ctx.run.write("loss.csv", loss_csv(&report))?;
    ctx.run.write("epochs.csv", epoch_csv(&report))?;
    ctx.run.write_json("train_report.json", &report)?;
    if !va.is_empty() {
        let rows: Vec<(String, f64, f64)> = va
            .iter()
            .map(|e| Ok((e.id.clone(), model.predict(&e.input)?.clip_score, e.target)))
            .collect::<Result<_>>()?;
        let mut buf = Vec::new();
        write_predictions(&mut buf, &rows)?;
        ctx.run.write("valid_predictions.csv", buf)?;
    }
    Ok(())
}

fn distill(ctx: &mut RunContext, a: &DistillArgs) -> Result<()> {
    if let Some(n) = a.steps {
        ctx.cfg.distill.steps = n;
        ctx.run.snapshot(&ctx.cfg)?;
    }
    let cfg = &ctx.cfg;
    let (encoder, quality) = match Model::load_teacher(&a.model)? {
        Model::Teacher { encoder: Some(e), quality } => (e, quality),
        _ => bail!("distillation needs a predictor trained on encoder features"),
    };
    cfg.student.validate(encoder.config().num_layers)?;
    let m = Manifest::load(&a.manifest)?;
    let rows = m.rows_in(&[Split::Train, Split::Valid]);
    if rows.is_empty() {
        bail!("manifest has no train or valid rows");
    }
    let taps = cfg.student.tapped_teacher_layers.clone();
    let data: Vec<DistillExample<f64>> = map_ordered(&rows, ctx.jobs, |r| -> Result<DistillExample<f64>> {
        let w = load_wave(&m, r)?;
        Ok(DistillExample::prepare(&encoder, &taps, r.clip_id.clone(), &w, m.thresholds(r)?, Manifest::score(r)?)?)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let student = transfer_init(&encoder, cfg.student.clone(), derive_seed(cfg.seed, "student"))?;
    let mut model = DistilledModel::new(student, quality)?;
    let report = distill_train(&mut model, &data, &cfg.distill)?;
    model.save(ctx.run.join(DISTILLED_FILE))?;
    ctx.run.write("distill.csv", report.to_csv())?;
    ctx.run.write_json("distill_report.json", &report)?;
    #[derive(Serialize)]
    struct Sizes {
        teacher_encoder: usize,
        student_encoder: usize,
        ratio: f64,
    }
    let (t, s) = (encoder.num_params(), model.student.num_params());
    ctx.run.write_json("params.json", &Sizes { teacher_encoder: t, student_encoder: s, ratio: s as f64 / t as f64 })
}

fn default_test_splits(s: &[Split]) -> Vec<Split> {
    if s.is_empty() {
        vec![Split::TestSeen, Split::TestUnseen]
    } else {
        s.to_vec()
    }
}

/// Predictions for `rows`, in row order.
pub fn predict_rows(m: &Manifest, rows: &[&ManifestRow], model: &Model, jobs: usize) -> Result<Vec<f64>> {
    map_ordered(rows, jobs, |r| -> Result<f64> { Ok(model.predict(&load_wave(m, r)?, m.thresholds(r)?)?.clip_score) })
        .into_iter()
        .collect()
}

fn scored(m: &Manifest, rows: &[&ManifestRow], preds: &[f64]) -> Result<Vec<ScoredClip>> {
    rows.iter()
        .zip(preds)
        .map(|(r, &p)| {
            Ok(ScoredClip {
                id: r.clip_id.clone(),
                truth: Manifest::score(r)?,
                pred: p,
                genre: r.genre.clone(),
                category: m.audiograms.get(&r.audiogram_id)?.category().name().to_string(),
                condition_id: r.condition_id.clone(),
                seen: r.split != Split::TestUnseen,
            })
        })
        .collect()
}

fn eval(ctx: &RunContext, a: &EvalArgs) -> Result<()> {
    let q = a.quantiles.unwrap_or(ctx.cfg.eval.quantiles);
    let tol = a.tolerance.unwrap_or(ctx.cfg.eval.tolerance);
    if q < 2 || !(tol > 0.0) {
        bail!("quantiles must be at least 2 and tolerance positive");
    }
    let m = Manifest::load(&a.manifest)?;
    let model = Model::load(&a.model)?;
    let rows = m.rows_in(&default_test_splits(&a.splits));
    if rows.is_empty() {
        bail!("no rows in the requested splits");
    }
    let preds = predict_rows(&m, &rows, &model, ctx.jobs)?;
    let clips = scored(&m, &rows, &preds)?;
    let report = evaluate_scored(&clips)?;
    ctx.run.write("eval.csv", report.to_csv())?;
    ctx.run.write("eval_long.csv", report.to_long_csv())?;
    ctx.run.write_json("eval.json", &report)?;
    let mut buf = Vec::new();
    write_predictions(&mut buf, &clips.iter().map(|c| (c.id.clone(), c.pred, c.truth)).collect::<Vec<_>>())?;
    ctx.run.write("predictions.csv", buf)?;
    let truths: Vec<f64> = clips.iter().map(|c| c.truth).collect();
    let curve = anchor_curve(&preds, &truths, q, tol)?;
    ctx.run.write("anchor.csv", curve.to_csv())?;
    ctx.run.write_json("anchor.json", &curve)
}

/// `n` rows drawn without replacement, seeded, in manifest order.
fn sample_rows(rows: Vec<&ManifestRow>, n: usize, seed: u64) -> Vec<&ManifestRow> {
    if n >= rows.len() {
        return rows;
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep: Vec<usize> = idx[..n].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| rows[i]).collect()
}

fn sweep(ctx: &RunContext, a: &SplSweepArgs) -> Result<()> {
    let levels = if a.levels.is_empty() { ctx.cfg.eval.levels.clone() } else { a.levels.clone() };
    let m = Manifest::load(&a.manifest)?;
    let model = Model::load(&a.model)?;
    let rows = sample_rows(m.rows_in(&[Split::TestSeen, Split::TestUnseen]), a.clips.unwrap_or(ctx.cfg.eval.spl_clips), derive_seed(ctx.cfg.seed, "spl-clips"));
    if rows.is_empty() {
        bail!("no test rows to sweep");
    }
    let waves: Vec<Waveform<f64>> = rows.iter().map(|r| load_wave(&m, r)).collect::<Result<_>>()?;
    let hl: Vec<[f64; 8]> = rows.iter().map(|r| m.thresholds(r)).collect::<Result<_>>()?;
    let report = spl_sweep(&waves, &levels, |i, w| Ok(model.predict(w, hl[i])?.clip_score))?;
    ctx.run.write("spl_sweep.csv", report.to_csv())?;
    ctx.run.write_json("spl_sweep.json", &report)?;
    ctx.run.write("spl_clips.txt", rows.iter().map(|r| format!("{}\n", r.clip_id)).collect::<String>())
}

fn bench(ctx: &RunContext, a: &BenchArgs) -> Result<()> {
    let m = Manifest::load(&a.manifest)?;
    let mut models: Vec<(String, Model)> = Vec::new();
    let mut variants = a.variants.clone();
    variants.dedup();
    for v in variants {
        let (name, dir) = match v {
            VariantArg::Teacher => ("teacher", a.model.as_ref().ok_or_else(|| anyhow!("teacher variant needs --model"))?),
            VariantArg::Student => ("student", a.distilled.as_ref().ok_or_else(|| anyhow!("student variant needs --distilled"))?),
        };
        let model = if v == VariantArg::Teacher { Model::load_teacher(dir)? } else { Model::load(dir)? };
        if v == VariantArg::Student && !matches!(model, Model::Student(_)) {
            bail!("{} holds no distilled model", dir.display());
        }
        models.push((name.to_string(), model));
    }
    let rows = sample_rows(m.rows.iter().collect(), ctx.cfg.eval.bench_clips, derive_seed(ctx.cfg.seed, "bench-clips"));
    if rows.is_empty() {
        bail!("manifest is empty");
    }
    let clips: Vec<Waveform<f64>> = rows.iter().map(|r| load_wave(&m, r)).collect::<Result<_>>()?;
    let hl = m.thresholds(rows[0])?;
    let variants: Vec<Variant<'_, f64>> = models
        .iter()
        .map(|(name, model)| {
            Variant::new(
                name.clone(),
                move |w| model.features(w),
                move |f| Ok(model.predict_features(f, hl)?.clip_score),
            )
        })
        .collect();
    let e = &ctx.cfg.eval;
    let report = bench_runtime(&variants, &clips, e.bench_warmup, e.bench_repeats)?;
    ctx.run.write("bench.csv", report.to_csv())?;
    ctx.run.write_json("bench.json", &report)?;
    if let Some(r) = report.feature_ratio("student", "teacher") {
        ctx.run.write("ratio.txt", format!("student/teacher feature time: {r}\n"))?;
    }
    Ok(())
}

fn plot_data(ctx: &RunContext, a: &PlotDataArgs) -> Result<()> {
    let m = Manifest::load(&a.manifest)?;
    let model = Model::load(&a.model)?;
    let rows = m.rows_in(&[Split::TestSeen, Split::TestUnseen]);
    if rows.is_empty() {
        bail!("no test rows");
    }
    let preds = predict_rows(&m, &rows, &model, ctx.jobs)?;
    let clips = scored(&m, &rows, &preds)?;
    let mut s = String::from("clip_id,truth,pred,set,genre,category\n");
    for c in &clips {
        s.push_str(&format!("{},{},{},{},{},{}\n", c.id, c.truth, c.pred, if c.seen { "seen" } else { "unseen" }, c.genre, c.category));
    }
    ctx.run.write("scatter.csv", s)?;
    let truths: Vec<f64> = clips.iter().map(|c| c.truth).collect();
    ctx.run.write("anchor.csv", anchor_curve(&preds, &truths, ctx.cfg.eval.quantiles, ctx.cfg.eval.tolerance)?.to_csv())?;
    if let Some(id) = model.quality().ws_logits() {
        let logits = model.quality().params().get(id);
        let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut s = String::from("layer,weight\n");
        for (i, v) in e.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, v / z));
        }
        ctx.run.write("layer_weights.csv", s)?;
    }
    let row = match &a.clip {
        Some(id) => *m.rows.iter().find(|r| &r.clip_id == id).as_ref().ok_or_else(|| anyhow!("unknown clip {id}"))?,
        None => rows[0],
    };
    let w = load_wave(&m, row)?;
    let hl = m.thresholds(row)?;
    let p = model.predict(&w, hl)?;
    let mut s = String::from("frame,score\n");
    for (i, v) in p.frame_scores.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    ctx.run.write("frame_scores.csv", s)?;
    if let Some(maps) = model.attention(&w, hl)? {
        let mut s = String::from("head,query,key,weight\n");
        for (h, a) in maps.iter().enumerate() {
            for ((q, k), v) in a.indexed_iter() {
                s.push_str(&format!("{h},{q},{k},{v}\n"));
            }
        }
        ctx.run.write("attention.csv", s)?;
    }
    for name in ["loss.csv", "epochs.csv", "distill.csv"] {
        let src: PathBuf = a.model.join(name);
        if src.is_file() {
            std::fs::copy(&src, ctx.run.join(name)).with_context(|| format!("copying {}", src.display()))?;
        }
    }
    Ok(())
}
