//! Degraded-and-amplified corpus generation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use haaqi::audiogram::{apply_prescription, nal_r_gains, AudiogramBank, AudiogramSplit};
use haaqi::dsp::synth::{music_clip, Genre};
use haaqi::dsp::wav::{self, SampleFormat};
use haaqi::dsp::{apply_condition, ConditionBank, Waveform, TARGET_RATE};
use haaqi::nn::derive_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CorpusConfig, CorpusMode};
use crate::manifest::{Manifest, ManifestRow, Split};
use crate::parallel::map_ordered;

/// A clean source clip.
#[derive(Clone, Debug)]
pub struct CleanClip {
    pub id: String,
    pub genre: String,
    /// Path as recorded in the manifest (relative to the corpus directory or absolute).
    pub path: PathBuf,
    pub wave: Waveform<f64>,
}

/// Synthesizes `cfg.synth_clips` clips cycling through the genres and writes them under `dir/clean`.
pub fn synth_clean(cfg: &CorpusConfig, seed: u64, dir: &Path) -> Result<Vec<CleanClip>> {
    std::fs::create_dir_all(dir.join("clean"))?;
    (0..cfg.synth_clips)
        .map(|i| {
            let genre = Genre::ALL[i % Genre::ALL.len()];
            let id = format!("{}-{i:03}", genre.name());
            let wave = music_clip(genre, cfg.clip_seconds, TARGET_RATE, derive_seed(seed, &format!("clean/{id}")));
            let path = PathBuf::from("clean").join(format!("{id}.wav"));
            wav::write(dir.join(&path), &wave, SampleFormat::Float32)?;
            Ok(CleanClip { id, genre: genre.name().to_string(), path, wave })
        })
        .collect()
}

/// Reads every `.wav` in `root` and its immediate subdirectories; the
/// subdirectory name is the genre.
pub fn read_clean_dir(root: &Path) -> Result<Vec<CleanClip>> {
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(root)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            let genre = e.file_name().to_string_lossy().to_lowercase();
            let mut inner: Vec<PathBuf> = std::fs::read_dir(&p)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
            inner.sort();
            files.extend(inner.into_iter().filter(|q| is_wav(q)).map(|q| (q, genre.clone())));
        } else if is_wav(&p) {
            files.push((p, "unknown".to_string()));
        }
    }
    if files.is_empty() {
        bail!("no .wav files under {}", root.display());
    }
    let mut ids = HashSet::new();
    files
        .into_iter()
        .map(|(path, genre)| {
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if !ids.insert(id.clone()) {
                bail!("clip id collision: {id} appears more than once under {}", root.display());
            }
            let wave = wav::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let path = std::fs::canonicalize(&path)?;
            Ok(CleanClip { id, genre, path, wave })
        })
        .collect()
}

fn is_wav(p: &Path) -> bool {
    p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// One planned row before audio is rendered.
#[derive(Clone, Debug)]
pub struct PlannedRow {
    pub clip: usize,
    pub row: ManifestRow,
    pub noise_seed: u64,
}

/// Assigns conditions, audiograms and splits; depends only on the seed and inputs.
pub fn plan_rows(
    clips: &[CleanClip],
    conditions: &ConditionBank,
    audiograms: &AudiogramBank,
    cfg: &CorpusConfig,
    seed: u64,
) -> Result<Vec<PlannedRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corpus-plan"));
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(&mut rng);
    let n_test = (clips.len() as f64 * cfg.test_clip_fraction).round() as usize;
    let test_clips: HashSet<usize> = order[..n_test].iter().copied().collect();
    let train_pool = audiograms.ids(AudiogramSplit::Train);
    let test_pool = audiograms.ids(AudiogramSplit::Test);
    if train_pool.len() < cfg.audiograms_per_row || test_pool.len() < cfg.audiograms_per_row {
        bail!("audiogram bank too small for {} audiograms per row", cfg.audiograms_per_row);
    }
    let all_ids: Vec<&str> = conditions.conditions.iter().map(|c| c.id.as_str()).collect();
    let mut rows = Vec::new();
    let mut row_ids = HashSet::new();
    for (ci, clip) in clips.iter().enumerate() {
        let conds: Vec<&str> = match cfg.mode {
            CorpusMode::Exhaustive => all_ids.clone(),
            CorpusMode::Random => {
                if cfg.conditions_per_clip > all_ids.len() {
                    bail!("{} conditions per clip but the bank has {}", cfg.conditions_per_clip, all_ids.len());
                }
                all_ids.choose_multiple(&mut rng, cfg.conditions_per_clip).copied().collect()
            }
        };
        for cond in conds {
            let split = if conditions.is_unseen(cond) {
                Split::TestUnseen
            } else if test_clips.contains(&ci) {
                Split::TestSeen
            } else if rng.gen::<f64>() < cfg.valid_fraction {
                Split::Valid
            } else {
                Split::Train
            };
            let pool = if split.is_test() { &test_pool } else { &train_pool };
            for ag in pool.choose_multiple(&mut rng, cfg.audiograms_per_row) {
                let clip_id = format!("{}__{cond}__{ag}", clip.id);
                if !row_ids.insert(clip_id.clone()) {
                    bail!("clip id collision: {clip_id}");
                }
                rows.push(PlannedRow {
                    clip: ci,
                    noise_seed: derive_seed(seed, &format!("row/{clip_id}")),
                    row: ManifestRow {
                        audio_path: PathBuf::from("audio").join(format!("{clip_id}.wav")),
                        clip_id,
                        clean_path: clip.path.clone(),
                        genre: clip.genre.clone(),
                        condition_id: cond.to_string(),
                        audiogram_id: ag.to_string(),
                        split,
                        true_score: None,
                    },
                });
            }
        }
    }
    Ok(rows)
}

/// Degrades with the row's condition and amplifies with the listener's prescription.
pub fn render_row(
    clean: &Waveform<f64>,
    row: &ManifestRow,
    noise_seed: u64,
    conditions: &ConditionBank,
    audiograms: &AudiogramBank,
) -> haaqi::Result<Waveform<f64>> {
    let degraded = apply_condition(clean, conditions.get(&row.condition_id)?, noise_seed)?;
    apply_prescription(&degraded, &nal_r_gains(audiograms.get(&row.audiogram_id)?))
}

/// Builds the corpus under `dir`: clean clips (when synthesized), rendered
/// audio, manifest and banks.
pub fn build(cfg: &CorpusConfig, seed: u64, dir: &Path, jobs: usize) -> Result<Manifest> {
    let clips = match &cfg.clean_dir {
        Some(d) => read_clean_dir(d)?,
        None => synth_clean(cfg, seed, dir)?,
    };
    let conditions = ConditionBank::default_bank();
    let audiograms =
        AudiogramBank::generate(derive_seed(seed, "audiograms"), cfg.audiograms_per_category, cfg.train_audiograms_per_category);
    let plan = plan_rows(&clips, &conditions, &audiograms, cfg, seed)?;
    std::fs::create_dir_all(dir.join("audio"))?;
    let results = map_ordered(&plan, jobs, |p| -> Result<()> {
        let w = render_row(&clips[p.clip].wave, &p.row, p.noise_seed, &conditions, &audiograms)
            .with_context(|| format!("rendering {}", p.row.clip_id))?;
        wav::write(dir.join(&p.row.audio_path), &w, SampleFormat::Float32)?;
        Ok(())
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let manifest = Manifest { dir: dir.to_path_buf(), rows: plan.into_iter().map(|p| p.row).collect(), audiograms, conditions };
    manifest.validate()?;
    manifest.save(dir)?;
    Ok(manifest)
}
