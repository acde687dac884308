//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use haaqi::distill::{DistillConfig, StudentConfig};
use haaqi::features::EncoderConfig;
use haaqi::nn::derive_seed;
use haaqi::predictor::{PredictorConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusMode {
    /// Each clip gets `conditions_per_clip` conditions drawn at random.
    Random,
    /// Each clip is crossed with every condition in the bank.
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Directory of clean WAV files; genre is taken from the parent folder name.
    /// When absent, `synth_clips` synthetic clips are generated.
    pub clean_dir: Option<PathBuf>,
    pub synth_clips: usize,
    pub clip_seconds: f64,
    pub mode: CorpusMode,
    pub conditions_per_clip: usize,
    pub audiograms_per_row: usize,
    /// Share of clean clips held out for the seen test set.
    pub test_clip_fraction: f64,
    /// Share of remaining seen-condition rows used for validation.
    pub valid_fraction: f64,
    pub audiograms_per_category: usize,
    pub train_audiograms_per_category: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            clean_dir: None,
            synth_clips: 20,
            clip_seconds: 3.0,
            mode: CorpusMode::Random,
            conditions_per_clip: 5,
            audiograms_per_row: 1,
            test_clip_fraction: 0.2,
            valid_fraction: 0.2,
            audiograms_per_category: 50,
            train_audiograms_per_category: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub quantiles: usize,
    pub tolerance: f64,
    pub levels: Vec<f64>,
    /// Clips drawn (at random, seeded) for the level sweep.
    pub spl_clips: usize,
    pub bench_clips: usize,
    pub bench_warmup: usize,
    pub bench_repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            quantiles: haaqi::eval::DEFAULT_QUANTILES,
            tolerance: haaqi::eval::DEFAULT_TOLERANCE,
            levels: haaqi::eval::DEFAULT_LEVELS_DB.to_vec(),
            spl_clips: 100,
            bench_clips: 5,
            bench_warmup: 1,
            bench_repeats: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Existing teacher encoder weights; a seeded encoder is created when absent.
    pub encoder: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub student: StudentConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        resolve(&mut cfg.corpus.clean_dir);
        resolve(&mut cfg.paths.encoder);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Replaces the master seed and re-derives every sub-seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.derive_seeds();
        self
    }

    /// Sub-seeds are always derived from the master seed, kept to 63 bits so
    /// the snapshot stays valid TOML.
    pub fn derive_seeds(&mut self) {
        self.train.seed = derive_seed(self.seed, "train") >> 1;
        self.distill.seed = derive_seed(self.seed, "distill") >> 1;
    }

    pub fn validate(&self) -> Result<()> {
        if i64::try_from(self.seed).is_err() {
            bail!("seed {} exceeds {}", self.seed, i64::MAX);
        }
        let c = &self.corpus;
        if let Some(d) = &c.clean_dir {
            if !d.is_dir() {
                bail!("corpus.clean_dir {} does not exist", d.display());
            }
        } else if c.synth_clips == 0 {
            bail!("corpus.synth_clips must be positive when no clean_dir is given");
        }
        if !(c.clip_seconds > 0.0 && c.clip_seconds <= 60.0) {
            bail!("corpus.clip_seconds {} outside (0, 60]", c.clip_seconds);
        }
        if c.conditions_per_clip == 0 || c.audiograms_per_row == 0 {
            bail!("corpus.conditions_per_clip and audiograms_per_row must be positive");
        }
        for (name, v) in [("test_clip_fraction", c.test_clip_fraction), ("valid_fraction", c.valid_fraction)] {
            if !(0.0..1.0).contains(&v) {
                bail!("corpus.{name} {v} outside [0, 1)");
            }
        }
        if c.train_audiograms_per_category == 0 || c.train_audiograms_per_category >= c.audiograms_per_category {
            bail!("corpus.train_audiograms_per_category must be in 1..audiograms_per_category");
        }
        if let Some(p) = &self.paths.encoder {
            if !p.is_file() {
                bail!("paths.encoder {} does not exist", p.display());
            }
        }
        self.encoder.validate()?;
        self.predictor.validate()?;
        if self.predictor.features.uses_encoder()
            && (self.predictor.model_dim != self.encoder.model_dim || self.predictor.num_layers != self.encoder.num_layers)
        {
            bail!(
                "predictor expects {}x{} encoder features but the encoder is {}x{}",
                self.predictor.num_layers,
                self.predictor.model_dim,
                self.encoder.num_layers,
                self.encoder.model_dim
            );
        }
        self.train.validate()?;
        self.student.validate(self.encoder.num_layers)?;
        let e = &self.eval;
        if e.quantiles < 2 || !(e.tolerance > 0.0) || e.levels.is_empty() {
            bail!("eval: quantiles ≥ 2, tolerance > 0 and at least one level required");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_toml("[corpus]\nsynth_clips = 3\n").is_err());
        let c = RunConfig::from_toml("seed = 5\n").unwrap();
        assert_eq!(c.corpus, CorpusConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml("seed = 9\n[corpus]\nmode = \"exhaustive\"\n").unwrap().with_seed(11);
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.corpus.mode, CorpusMode::Exhaustive);
    }

    #[test]
    fn rejects_bad_values() {
        let c = RunConfig::from_toml("seed = 1\n[corpus]\nvalid_fraction = 1.5\n").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::from_toml("seed = 1\nbogus = 2\n").is_err());
        let c = RunConfig::from_toml("seed = 1\n[paths]\nencoder = \"/nonexistent/enc.bin\"\n").unwrap();
        assert!(c.validate().is_err());
    }
}
