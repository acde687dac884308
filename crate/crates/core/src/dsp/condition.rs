//! Declarative processing conditions and the default 100-condition bank.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{linear_filter, FilterSpec, Peak};
use super::noise::{add_noise, NoiseKind};
use super::nonlinear::{peak_clip, quantize};
use super::specsub::{spectral_subtract, SpecSubConfig};
use super::waveform::{Waveform, TARGET_RATE};
use super::wdrc::{wdrc, WdrcConfig};
use crate::error::{Error, Result};
use crate::nn::derive_seed;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Stage {
    AddNoise { kind: NoiseKind, snr_db: f64 },
    PeakClip { threshold: f64 },
    Quantize { bits: u32 },
    Wdrc(WdrcConfig),
    SpectralSubtract(SpecSubConfig),
    Filter(FilterSpec),
}

impl Stage {
    pub fn apply<T: Scalar>(&self, w: &Waveform<T>, seed: u64) -> Result<Waveform<T>> {
        match self {
            Stage::AddNoise { kind, snr_db } => add_noise(w, *kind, *snr_db, seed),
            Stage::PeakClip { threshold } => peak_clip(w, *threshold),
            Stage::Quantize { bits } => quantize(w, *bits),
            Stage::Wdrc(cfg) => wdrc(w, cfg),
            Stage::SpectralSubtract(cfg) => spectral_subtract(w, cfg),
            Stage::Filter(spec) => linear_filter(w, spec),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Stage::AddNoise { snr_db, .. } if !snr_db.is_finite() => Err(Error::NonFinite("snr_db".into())),
            Stage::PeakClip { threshold } if !(*threshold > 0.0 && *threshold <= 1.0) => {
                Err(Error::OutOfRange(format!("clip threshold {threshold}")))
            }
            Stage::Quantize { bits } if !(2..=32).contains(bits) => Err(Error::OutOfRange(format!("bits {bits}"))),
            Stage::Wdrc(cfg) => cfg.validate(),
            Stage::SpectralSubtract(cfg) => cfg.validate(),
            Stage::Filter(spec) => spec.validate(f64::from(TARGET_RATE)),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionGroup {
    /// Noise and nonlinear processing.
    NoiseNonlinear,
    /// Linear filtering.
    Filter,
    /// Nonlinear processing followed by a linear filter.
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessingCondition {
    pub id: String,
    pub group: ConditionGroup,
    pub stages: Vec<Stage>,
}

/// Seed of stage `index` given a condition-level noise seed.
pub fn stage_seed(noise_seed: u64, index: usize) -> u64 {
    derive_seed(noise_seed, &format!("stage{index}"))
}

/// Applies the stages of `c` left to right.
pub fn apply_condition<T: Scalar>(w: &Waveform<T>, c: &ProcessingCondition, noise_seed: u64) -> Result<Waveform<T>> {
    if c.stages.is_empty() {
        return Err(Error::InvalidConfig(format!("condition {} has no stages", c.id)));
    }
    let mut cur = w.clone();
    for (i, s) in c.stages.iter().enumerate() {
        cur = s.apply(&cur, stage_seed(noise_seed, i))?;
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionBank {
    pub conditions: Vec<ProcessingCondition>,
    /// Conditions withheld from training and used only for the unseen test split.
    #[serde(default)]
    pub unseen: Vec<String>,
}

fn snr_tag(snr: f64) -> String {
    if snr < 0.0 {
        format!("m{}", -snr)
    } else {
        format!("p{snr}")
    }
}

const SNRS: [f64; 4] = [-6.0, 0.0, 6.0, 12.0];
const MULTI_PEAKS: [Peak; 3] = [Peak::new(500.0, 10.0, 10.0), Peak::new(1000.0, 10.0, 10.0), Peak::new(2000.0, 10.0, 10.0)];

fn noise(kind: NoiseKind, snr_db: f64) -> Stage {
    Stage::AddNoise { kind, snr_db }
}

fn comp() -> Stage {
    Stage::Wdrc(WdrcConfig::default())
}

fn ssub() -> Stage {
    Stage::SpectralSubtract(SpecSubConfig::default())
}

fn filt(spec: FilterSpec) -> Stage {
    Stage::Filter(spec)
}

fn noise_nonlinear() -> Vec<(String, Vec<Stage>)> {
    use NoiseKind::{Babble, Ltass};
    let mut v: Vec<(String, Vec<Stage>)> = Vec::new();
    for s in SNRS {
        v.push((format!("ltass-{}", snr_tag(s)), vec![noise(Ltass, s)]));
    }
    for s in SNRS {
        v.push((format!("babble-{}", snr_tag(s)), vec![noise(Babble, s)]));
    }
    for t in [0.25, 0.5] {
        v.push((format!("clip-{}", (t * 100.0) as u32), vec![Stage::PeakClip { threshold: t }]));
    }
    for b in [6, 8] {
        v.push((format!("quant-{b}"), vec![Stage::Quantize { bits: b }]));
    }
    v.push(("comp".into(), vec![comp()]));
    for s in SNRS {
        v.push((format!("comp-babble-{}", snr_tag(s)), vec![noise(Babble, s), comp()]));
    }
    for s in SNRS {
        v.push((format!("ssub-babble-{}", snr_tag(s)), vec![noise(Babble, s), ssub()]));
    }
    for s in SNRS {
        v.push((format!("comp-ssub-babble-{}", snr_tag(s)), vec![noise(Babble, s), ssub(), comp()]));
    }
    for s in SNRS {
        v.push((format!("comp-ltass-{}", snr_tag(s)), vec![noise(Ltass, s), comp()]));
    }
    for s in [0.0, 6.0, 12.0] {
        v.push((format!("ssub-ltass-{}", snr_tag(s)), vec![noise(Ltass, s), ssub()]));
    }
    v
}

fn filters() -> Vec<(String, Vec<Stage>)> {
    let mut v: Vec<(String, Vec<Stage>)> = Vec::new();
    let hp = [200.0, 500.0, 1000.0];
    let lp = [2000.0, 4000.0, 6000.0];
    for fc in hp {
        v.push((format!("hp-{fc}"), vec![filt(FilterSpec::HighPass { fc, order: 4 })]));
    }
    for fc in lp {
        v.push((format!("lp-{fc}"), vec![filt(FilterSpec::LowPass { fc, order: 4 })]));
    }
    for f1 in hp {
        for f2 in lp {
            v.push((format!("bp-{f1}-{f2}"), vec![filt(FilterSpec::BandPass { f1, f2, order: 4 })]));
        }
    }
    for slope in [2.0, 4.0, 6.0] {
        for sign in [1.0, -1.0] {
            let s = slope * sign;
            v.push((format!("tilt-{}", snr_tag(s)), vec![filt(FilterSpec::Tilt { db_per_octave: s })]));
        }
    }
    for p in MULTI_PEAKS {
        v.push((format!("peak-{}", p.center_hz), vec![filt(FilterSpec::Resonance { peak: p })]));
    }
    v.push(("multipeak".into(), vec![filt(FilterSpec::MultiResonance { peaks: MULTI_PEAKS.to_vec() })]));
    for fc in [2000.0, 3000.0, 4000.0, 6000.0] {
        v.push((
            format!("multipeak-lp-{fc}"),
            vec![filt(FilterSpec::MultiResonanceLowPass { peaks: MULTI_PEAKS.to_vec(), fc, order: 4 })],
        ));
    }
    for p in MULTI_PEAKS {
        v.push((
            format!("bp-peak-{}", p.center_hz),
            vec![
                filt(FilterSpec::BandPass { f1: 200.0, f2: 4000.0, order: 4 }),
                filt(FilterSpec::Resonance { peak: p }),
            ],
        ));
    }
    v
}

fn combined() -> Vec<(String, Vec<Stage>)> {
    use NoiseKind::{Babble, Ltass};
    let bases: Vec<(&str, Vec<Stage>)> = vec![
        ("ltass-p6", vec![noise(Ltass, 6.0)]),
        ("babble-p6", vec![noise(Babble, 6.0)]),
        ("clip-50", vec![Stage::PeakClip { threshold: 0.5 }]),
        ("quant-8", vec![Stage::Quantize { bits: 8 }]),
        ("comp", vec![comp()]),
        ("comp-babble-p6", vec![noise(Babble, 6.0), comp()]),
    ];
    let shapes: Vec<(&str, FilterSpec)> = vec![
        ("hp-500", FilterSpec::HighPass { fc: 500.0, order: 4 }),
        ("lp-4000", FilterSpec::LowPass { fc: 4000.0, order: 4 }),
        ("multipeak", FilterSpec::MultiResonance { peaks: MULTI_PEAKS.to_vec() }),
        ("tilt-m6", FilterSpec::Tilt { db_per_octave: -6.0 }),
        ("tilt-p6", FilterSpec::Tilt { db_per_octave: 6.0 }),
        ("peak-1000", FilterSpec::Resonance { peak: MULTI_PEAKS[1] }),
    ];
    let mut v = Vec::new();
    for (b, stages) in &bases {
        for (f, spec) in &shapes {
            let mut s = stages.clone();
            s.push(filt(spec.clone()));
            v.push((format!("{b}+{f}"), s));
        }
    }
    v
}

impl ConditionBank {
    /// The 32 + 32 + 36 grid with its default 18 unseen conditions.
    pub fn default_bank() -> Self {
        let mut conditions = Vec::with_capacity(100);
        for (group, entries) in [
            (ConditionGroup::NoiseNonlinear, noise_nonlinear()),
            (ConditionGroup::Filter, filters()),
            (ConditionGroup::Combined, combined()),
        ] {
            let prefix = match group {
                ConditionGroup::NoiseNonlinear => "a",
                ConditionGroup::Filter => "b",
                ConditionGroup::Combined => "c",
            };
            for (id, stages) in entries {
                conditions.push(ProcessingCondition { id: format!("{prefix}-{id}"), group, stages });
            }
        }
        let unseen = conditions
            .iter()
            .filter(|c| {
                let id = c.id.as_str();
                id.starts_with("a-comp-babble-")
                    || id.starts_with("a-comp-ssub-babble-")
                    || id.starts_with("b-multipeak-lp-")
                    || id.starts_with("c-comp-babble-p6+")
            })
            .map(|c| c.id.clone())
            .collect();
        Self { conditions, unseen }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.conditions {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateId(c.id.clone()));
            }
            if c.stages.is_empty() {
                return Err(Error::InvalidConfig(format!("condition {} has no stages", c.id)));
            }
            for s in &c.stages {
                s.validate()?;
            }
        }
        for u in &self.unseen {
            if !seen.contains(u.as_str()) {
                return Err(Error::UnknownId(u.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&ProcessingCondition> {
        self.conditions.iter().find(|c| c.id == id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn is_unseen(&self, id: &str) -> bool {
        self.unseen.iter().any(|u| u == id)
    }

    pub fn seen(&self) -> impl Iterator<Item = &ProcessingCondition> {
        self.conditions.iter().filter(|c| !self.is_unseen(&c.id))
    }

    pub fn unseen_conditions(&self) -> impl Iterator<Item = &ProcessingCondition> {
        self.conditions.iter().filter(|c| self.is_unseen(&c.id))
    }

    pub fn count(&self, group: ConditionGroup) -> usize {
        self.conditions.iter().filter(|c| c.group == group).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let bank: Self = serde_json::from_str(s)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl Default for ConditionBank {
    fn default() -> Self {
        Self::default_bank()
    }
}
