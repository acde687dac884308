//! Hearing-loss audiograms: the six shape families, NAL-R gains and the
//! prescription filter.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{fir, Waveform, TARGET_RATE};
use crate::error::{Error, Result};
use crate::nn::derive_seed;
use crate::scalar::Scalar;

/// Audiometric frequencies, in the order thresholds are stored.
pub const FREQS_HZ: [f64; 8] = [250.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0, 6000.0, 8000.0];
pub const MAX_THRESHOLD_DB: f64 = 120.0;
/// A threshold above this is hearing loss.
pub const LOSS_DB: f64 = 20.0;

const I250: usize = 0;
const I500: usize = 1;
const I1K: usize = 2;
const I2K: usize = 3;
const I3K: usize = 4;
const I4K: usize = 5;
const I6K: usize = 6;
const I8K: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Flat,
    Sloping,
    Rising,
    CookieBite,
    NoiseNotched,
    HighFrequency,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Flat,
        Category::Sloping,
        Category::Rising,
        Category::CookieBite,
        Category::NoiseNotched,
        Category::HighFrequency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Flat => "flat",
            Category::Sloping => "sloping",
            Category::Rising => "rising",
            Category::CookieBite => "cookie-bite",
            Category::NoiseNotched => "noise-notched",
            Category::HighFrequency => "high-frequency",
        }
    }

    /// Shape rule of this family.
    pub fn matches(self, h: &[f64; 8]) -> bool {
        let span = max(h) - min(h);
        let non_decreasing = h.windows(2).all(|w| w[1] >= w[0]);
        let non_increasing = h.windows(2).all(|w| w[1] <= w[0]);
        match self {
            Category::Flat => span <= 10.0,
            Category::Sloping => non_decreasing && span >= 20.0,
            Category::Rising => non_increasing && span >= 20.0,
            Category::CookieBite => h[I1K].min(h[I2K]) >= h[I250].max(h[I8K]) + 15.0,
            Category::NoiseNotched => {
                let notch = h[I3K].max(h[I4K]);
                notch >= h[I2K] + 15.0 && notch >= h[I8K] + 15.0
            }
            Category::HighFrequency => {
                [I250, I500, I1K].iter().all(|&i| h[i] <= 25.0) && [I4K, I6K, I8K].iter().all(|&i| h[i] >= 40.0)
            }
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::UnknownId(s.to_string()))
    }
}

fn max(h: &[f64]) -> f64 {
    h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(h: &[f64]) -> f64 {
    h.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audiogram {
    thresholds: [f64; 8],
    category: Category,
}

fn check_range(h: &[f64; 8]) -> Result<()> {
    if let Some(v) = h.iter().find(|v| !(0.0..=MAX_THRESHOLD_DB).contains(*v)) {
        return Err(Error::OutOfRange(format!("threshold {v} dB HL outside [0, {MAX_THRESHOLD_DB}]")));
    }
    if !h.iter().any(|&v| v > LOSS_DB) {
        return Err(Error::OutOfRange(format!("no threshold above {LOSS_DB} dB HL")));
    }
    Ok(())
}

/// The unique family whose rule `h` satisfies.
pub fn classify(h: &[f64; 8]) -> Result<Category> {
    let hits: Vec<Category> = Category::ALL.into_iter().filter(|c| c.matches(h)).collect();
    match hits.as_slice() {
        [one] => Ok(*one),
        _ => Err(Error::AmbiguousShape(hits.iter().map(|c| c.name().to_string()).collect())),
    }
}

impl Audiogram {
    /// Builds an audiogram, checking ranges and that `category` is the
    /// unique matching family.
    pub fn new(thresholds: [f64; 8], category: Category) -> Result<Self> {
        check_range(&thresholds)?;
        let found = classify(&thresholds)?;
        if found != category {
            return Err(Error::InvalidConfig(format!("thresholds classify as {found}, labelled {category}")));
        }
        Ok(Self { thresholds, category })
    }

    /// Builds an audiogram and infers its family.
    pub fn from_thresholds(thresholds: [f64; 8]) -> Result<Self> {
        check_range(&thresholds)?;
        let category = classify(&thresholds)?;
        Ok(Self { thresholds, category })
    }

    pub fn thresholds(&self) -> &[f64; 8] {
        &self.thresholds
    }

    pub fn category(&self) -> Category {
        self.category
    }

    /// Generates a random audiogram of the requested family.
    pub fn generate(category: Category, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, category.name()));
        loop {
            let h = propose(category, &mut rng).map(|v: f64| v.round().clamp(0.0, MAX_THRESHOLD_DB));
            if check_range(&h).is_ok() && classify(&h).ok() == Some(category) {
                return Self { thresholds: h, category };
            }
        }
    }
}

pub fn generate_audiogram(category: Category, seed: u64) -> Audiogram {
    Audiogram::generate(category, seed)
}

pub fn classify_audiogram(a: &Audiogram) -> Result<Category> {
    classify(a.thresholds())
}

fn propose(category: Category, rng: &mut ChaCha8Rng) -> [f64; 8] {
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..=hi);
    let mut h = [0.0; 8];
    match category {
        Category::Flat => {
            let base = u(30.0, 90.0);
            for v in &mut h {
                *v = base + u(-5.0, 5.0);
            }
        }
        Category::Sloping => {
            h[0] = u(0.0, 40.0);
            for i in 1..8 {
                h[i] = h[i - 1] + u(0.0, 15.0);
            }
        }
        Category::Rising => {
            h[0] = u(40.0, 100.0);
            for i in 1..8 {
                h[i] = (h[i - 1] - u(0.0, 15.0)).max(0.0);
            }
        }
        Category::CookieBite => {
            h[I250] = u(5.0, 50.0);
            h[I8K] = u(5.0, 50.0);
            let mid = h[I250].max(h[I8K]) + u(15.0, 35.0);
            h[I1K] = mid + u(0.0, 10.0);
            h[I2K] = mid + u(0.0, 10.0);
            h[I500] = u(h[I250], h[I1K]);
            h[I3K] = u(h[I8K], h[I2K]);
            h[I4K] = u(h[I8K], h[I3K]);
            h[I6K] = u(h[I8K], h[I4K]);
        }
        Category::NoiseNotched => {
            let base = u(0.0, 30.0);
            for i in [I250, I500, I1K, I2K] {
                h[i] = base + u(-5.0, 5.0);
            }
            h[I4K] = h[I2K] + u(20.0, 45.0);
            h[I3K] = u(h[I2K], h[I4K]);
            h[I8K] = base + u(-5.0, 10.0);
            h[I6K] = u(h[I8K], h[I4K]);
        }
        Category::HighFrequency => {
            h[I250] = u(10.0, 25.0);
            h[I500] = h[I250] - u(5.0, 10.0);
            h[I1K] = u(0.0, 25.0);
            h[I2K] = u(15.0, 40.0);
            h[I3K] = u(30.0, 60.0);
            h[I4K] = h[I3K].max(40.0) + u(0.0, 15.0);
            h[I6K] = h[I4K] + u(0.0, 15.0);
            h[I8K] = h[I6K] + u(0.0, 15.0);
        }
    }
    h
}

/// Constants of the NAL-R linear prescription.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NalRConfig {
    /// Weight of the 500/1000/2000 Hz threshold sum.
    pub x_coef: f64,
    /// Fraction of each threshold added as gain.
    pub slope: f64,
    /// Per-frequency correction, dB, aligned with [`FREQS_HZ`].
    pub correction_db: [f64; 8],
    pub max_gain_db: f64,
}

impl Default for NalRConfig {
    fn default() -> Self {
        Self {
            x_coef: 0.05,
            slope: 0.31,
            correction_db: [-17.0, -8.0, 1.0, -1.0, -2.0, -2.0, -2.0, -2.0],
            max_gain_db: 80.0,
        }
    }
}

/// Insertion gains in dB at [`FREQS_HZ`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    pub gains_db: [f64; 8],
}

impl GainVector {
    pub fn new(gains_db: [f64; 8]) -> Result<Self> {
        if let Some(g) = gains_db.iter().find(|g| !(0.0..=80.0).contains(*g)) {
            return Err(Error::OutOfRange(format!("gain {g} dB outside [0, 80]")));
        }
        Ok(Self { gains_db })
    }

    pub fn zeros() -> Self {
        Self { gains_db: [0.0; 8] }
    }

    /// Gain in dB at `f`, interpolated linearly over log frequency and held
    /// constant outside the audiometric range.
    pub fn gain_db_at(&self, f: f64) -> f64 {
        let g = &self.gains_db;
        if f <= FREQS_HZ[0] {
            return g[0];
        }
        if f >= FREQS_HZ[7] {
            return g[7];
        }
        let i = FREQS_HZ.iter().position(|&c| c > f).unwrap();
        let t = (f / FREQS_HZ[i - 1]).ln() / (FREQS_HZ[i] / FREQS_HZ[i - 1]).ln();
        g[i - 1] + t * (g[i] - g[i - 1])
    }
}

/// NAL-R gains for raw thresholds. Normal hearing (no threshold above 0 dB
/// HL) gets no amplification.
pub fn nal_r_from_thresholds(h: &[f64; 8], cfg: &NalRConfig) -> GainVector {
    if h.iter().all(|&v| v <= 0.0) {
        return GainVector::zeros();
    }
    let x = cfg.x_coef * (h[I500] + h[I1K] + h[I2K]);
    let mut gains_db = [0.0; 8];
    for (i, g) in gains_db.iter_mut().enumerate() {
        *g = (x + cfg.slope * h[i] + cfg.correction_db[i]).clamp(0.0, cfg.max_gain_db);
    }
    GainVector { gains_db }
}

pub fn nal_r_gains_with(a: &Audiogram, cfg: &NalRConfig) -> GainVector {
    nal_r_from_thresholds(a.thresholds(), cfg)
}

pub fn nal_r_gains(a: &Audiogram) -> GainVector {
    nal_r_gains_with(a, &NalRConfig::default())
}

/// Length of the prescription FIR at 16 kHz.
pub const PRESCRIPTION_TAPS: usize = 1025;

/// Zero-phase FIR realizing the interpolated gain curve; this is the sum of an
/// eight-band filterbank whose band gains follow `g`.
pub fn prescription_filter<T: Scalar>(g: &GainVector, fs: f64) -> Vec<T> {
    fir::design(PRESCRIPTION_TAPS, fs, |f| 10f64.powf(g.gain_db_at(f) / 20.0))
}

pub fn apply_prescription<T: Scalar>(w: &Waveform<T>, g: &GainVector) -> Result<Waveform<T>> {
    w.require_rate(TARGET_RATE)?;
    let h: Vec<T> = prescription_filter(g, f64::from(TARGET_RATE));
    Ok(w.with_samples(fir::filter_zero_phase(w.samples(), &h)))
}

/// A labelled collection of audiograms with a per-category train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct AudiogramBank {
    pub entries: Vec<(String, Audiogram)>,
    pub train_per_category: usize,
}

pub const BANK_PER_CATEGORY: usize = 50;
pub const BANK_TRAIN_PER_CATEGORY: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AudiogramSplit {
    Train,
    Test,
}

impl AudiogramBank {
    /// `per_category` patterns of each family; the first `train` of each are
    /// the training split.
    pub fn generate(master_seed: u64, per_category: usize, train: usize) -> Self {
        let mut entries = Vec::with_capacity(per_category * Category::ALL.len());
        for c in Category::ALL {
            for i in 0..per_category {
                let seed = derive_seed(master_seed, &format!("audiogram/{}/{i}", c.name()));
                entries.push((format!("{}-{i:03}", c.name()), Audiogram::generate(c, seed)));
            }
        }
        Self { entries, train_per_category: train.min(per_category) }
    }

    pub fn default_bank(master_seed: u64) -> Self {
        Self::generate(master_seed, BANK_PER_CATEGORY, BANK_TRAIN_PER_CATEGORY)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&Audiogram> {
        self.entries.iter().find(|(i, _)| i == id).map(|(_, a)| a).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn split_of(&self, id: &str) -> Result<AudiogramSplit> {
        let a = self.get(id)?;
        let rank = self
            .entries
            .iter()
            .filter(|(_, b)| b.category() == a.category())
            .position(|(i, _)| i == id)
            .expect("id present");
        Ok(if rank < self.train_per_category { AudiogramSplit::Train } else { AudiogramSplit::Test })
    }

    pub fn ids(&self, split: AudiogramSplit) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(id, _)| self.split_of(id).ok() == Some(split))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// CSV: `id,category,t250,...,t8000`, integer thresholds.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,category,t250,t500,t1000,t2000,t3000,t4000,t6000,t8000\n");
        for (id, a) in &self.entries {
            s.push_str(id);
            s.push(',');
            s.push_str(a.category().name());
            for t in a.thresholds() {
                s.push_str(&format!(",{}", t.round() as i64));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, train_per_category: usize) -> Result<Self> {
        let mut entries: Vec<(String, Audiogram)> = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 10 {
                return Err(Error::Format(format!("audiogram csv line {}: expected 10 fields", n + 1)));
            }
            let cat: Category = cols[1].parse()?;
            let mut h = [0.0; 8];
            for (v, c) in h.iter_mut().zip(&cols[2..]) {
                *v = c.parse::<i64>().map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))? as f64;
            }
            if entries.iter().any(|(i, _)| i == cols[0]) {
                return Err(Error::DuplicateId(cols[0].to_string()));
            }
            entries.push((cols[0].to_string(), Audiogram::new(h, cat)?));
        }
        Ok(Self { entries, train_per_category })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, train_per_category: usize) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?, train_per_category)
    }
}
