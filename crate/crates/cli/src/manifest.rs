//! JSON-lines corpus manifest and score CSV files.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use haaqi::audiogram::AudiogramBank;
use haaqi::dsp::ConditionBank;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const AUDIOGRAMS_FILE: &str = "audiograms.csv";
pub const CONDITIONS_FILE: &str = "conditions.json";
pub const BANK_META_FILE: &str = "banks.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Valid,
    TestSeen,
    TestUnseen,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::TestSeen, Split::TestUnseen];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::TestSeen => "test-seen",
            Split::TestUnseen => "test-unseen",
        }
    }

    pub fn is_test(self) -> bool {
        matches!(self, Split::TestSeen | Split::TestUnseen)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| anyhow!("unknown split {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    /// Degraded and amplified audio, relative to the manifest directory unless absolute.
    pub audio_path: PathBuf,
    /// Clean source audio, same path convention.
    pub clean_path: PathBuf,
    pub genre: String,
    pub condition_id: String,
    pub audiogram_id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_score: Option<f64>,
}

/// Size of the audiogram train split, needed to read the bank back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankMeta {
    pub train_audiograms_per_category: usize,
}

/// Manifest rows plus the banks their ids refer to.
#[derive(Clone, Debug)]
pub struct Manifest {
    pub dir: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub audiograms: AudiogramBank,
    pub conditions: ConditionBank,
}

pub fn write_rows<W: Write>(mut w: W, rows: &[ManifestRow]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(text: &str) -> Result<Vec<ManifestRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("manifest line {}", i + 1)))
        .collect()
}

impl Manifest {
    /// Loads `manifest.jsonl` and the banks stored beside it.
    pub fn load(path: &Path) -> Result<Self> {
        let (file, dir) = if path.is_dir() {
            (path.join(MANIFEST_FILE), path.to_path_buf())
        } else {
            (path.to_path_buf(), path.parent().unwrap_or(Path::new(".")).to_path_buf())
        };
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let rows = read_rows(&text)?;
        let meta: BankMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(BANK_META_FILE))?)?;
        let audiograms = AudiogramBank::load(dir.join(AUDIOGRAMS_FILE), meta.train_audiograms_per_category)?;
        let conditions = ConditionBank::load(dir.join(CONDITIONS_FILE))?;
        let m = Self { dir, rows, audiograms, conditions };
        m.validate()?;
        Ok(m)
    }

    /// Writes rows and banks into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(std::io::BufWriter::new(std::fs::File::create(dir.join(MANIFEST_FILE))?), &self.rows)?;
        self.audiograms.save(dir.join(AUDIOGRAMS_FILE))?;
        self.conditions.save(dir.join(CONDITIONS_FILE))?;
        let meta = BankMeta { train_audiograms_per_category: self.audiograms.train_per_category };
        std::fs::write(dir.join(BANK_META_FILE), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Same rows with paths rewritten relative to `new_dir`.
    pub fn relocated(&self, new_dir: &Path) -> Result<Self> {
        let abs_new = absolute(new_dir)?;
        let mut rows = self.rows.clone();
        for r in &mut rows {
            for p in [&mut r.audio_path, &mut r.clean_path] {
                let full = absolute(&self.resolve(p))?;
                *p = pathdiff::diff_paths(&full, &abs_new).unwrap_or(full);
            }
        }
        Ok(Self { dir: new_dir.to_path_buf(), rows, audiograms: self.audiograms.clone(), conditions: self.conditions.clone() })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    /// Ids resolve, ids are unique, unseen conditions only appear in `test-unseen`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.clip_id.as_str()) {
                bail!("duplicate clip id {}", r.clip_id);
            }
            self.conditions.get(&r.condition_id)?;
            self.audiograms.get(&r.audiogram_id)?;
            let unseen = self.conditions.is_unseen(&r.condition_id);
            if unseen != (r.split == Split::TestUnseen) {
                bail!("row {} has split {} but condition {} is {}", r.clip_id, r.split, r.condition_id, if unseen { "unseen" } else { "seen" });
            }
            if let Some(s) = r.true_score {
                if !(0.0..=1.0).contains(&s) {
                    bail!("row {} has score {s} outside [0, 1]", r.clip_id);
                }
            }
        }
        Ok(())
    }

    pub fn rows_in(&self, splits: &[Split]) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| splits.contains(&r.split)).collect()
    }

    pub fn thresholds(&self, r: &ManifestRow) -> Result<[f64; 8]> {
        Ok(*self.audiograms.get(&r.audiogram_id)?.thresholds())
    }

    pub fn score(r: &ManifestRow) -> Result<f64> {
        r.true_score.ok_or_else(|| anyhow!("row {} is not labeled", r.clip_id))
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

/// Reads a `clip_id,score` CSV.
pub fn read_scores(text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("clip_id")) {
            continue;
        }
        let (id, score) = line.split_once(',').ok_or_else(|| anyhow!("score line {}: expected clip_id,score", i + 1))?;
        let score: f64 = score.trim().parse().with_context(|| format!("score line {}", i + 1))?;
        if !(0.0..=1.0).contains(&score) {
            bail!("score {score} for {id} outside [0, 1]");
        }
        if out.insert(id.trim().to_string(), score).is_some() {
            bail!("duplicate score for {id}");
        }
    }
    Ok(out)
}

pub fn scores_csv(rows: &[ManifestRow]) -> String {
    let mut s = String::from("clip_id,score\n");
    for r in rows {
        if let Some(v) = r.true_score {
            s.push_str(&format!("{},{v}\n", r.clip_id));
        }
    }
    s
}
