use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::nn::{derive_seed, Adam, AdamConfig};
use crate::scalar::Scalar;

use super::loss::{quality_loss, quality_loss_graph};
use super::model::{ClipInput, PredictorConfig, QualityModel, QualityPrediction};

/// One labelled clip.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub id: String,
    pub input: ClipInput<T>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Hard cap on optimiser steps across all epochs.
    pub max_steps: Option<usize>,
    pub patience: usize,
    pub min_delta: f64,
    /// Share of the data held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 8,
            max_epochs: 100,
            max_steps: None,
            patience: 5,
            min_delta: 1e-5,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and max_epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(format!("validation_fraction {}", self.validation_fraction)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss of every optimiser step (before the update).
    pub step_losses: Vec<f64>,
    pub epoch_train_losses: Vec<f64>,
    pub epoch_val_losses: Vec<f64>,
    /// Validation loss before any update.
    pub initial_val_loss: Option<f64>,
    /// Epoch (1-based) whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
    pub steps: usize,
    pub stopped_early: bool,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// Deterministic train/validation split of `n` items.
pub fn split_indices(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "split")));
    let n_val = if n < 2 { 0 } else { ((n as f64 * validation_fraction).round() as usize).min(n - 1) };
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Forward-only predictions for every example.
pub fn predict_all<T: Scalar>(model: &QualityModel<T>, data: &[&Example<T>]) -> Result<Vec<QualityPrediction>> {
    data.iter().map(|e| model.predict(&e.input)).collect()
}

/// Mean batch loss over `data` without building gradients.
pub fn dataset_loss<T: Scalar>(model: &QualityModel<T>, data: &[&Example<T>]) -> Result<f64> {
    let preds = predict_all(model, data)?;
    let truth: Vec<f64> = data.iter().map(|e| e.target).collect();
    quality_loss(&truth, &preds)
}

/// One optimiser step on `batch`; returns the loss before the update.
pub fn train_step<T: Scalar>(
    model: &mut QualityModel<T>,
    adam: &mut Adam<T>,
    batch: &[&Example<T>],
    trainable: impl Fn(&str) -> bool,
) -> Result<f64> {
    let grads = {
        let mut g = Graph::new();
        let bind = model.params().bind(&mut g, &trainable);
        let mut scores = Vec::with_capacity(batch.len());
        for e in batch {
            scores.push(model.forward_graph(&mut g, &bind, &e.input)?);
        }
        let truth: Vec<f64> = batch.iter().map(|e| e.target).collect();
        let loss = quality_loss_graph(&mut g, &truth, &scores)?;
        let value = g.item(loss).to_f64_lossy();
        if !value.is_finite() {
            let ids: Vec<&str> = batch.iter().map(|e| e.id.as_str()).collect();
            return Err(Error::NonFinite(format!("training loss {value} on batch {ids:?}")));
        }
        let mut grads = g.backward(loss);
        (bind.collect(&mut grads), value)
    };
    adam.step(model.params_mut(), &grads.0);
    Ok(grads.1)
}

/// Trains `model` in place with early stopping, restoring the best weights.
/// The data is split with [`split_indices`].
pub fn train_model<T: Scalar>(model: &mut QualityModel<T>, data: &[Example<T>], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_fraction, cfg.seed);
    let train: Vec<&Example<T>> = train_idx.iter().map(|&i| &data[i]).collect();
    let val: Vec<&Example<T>> = val_idx.iter().map(|&i| &data[i]).collect();
    train_with_validation(model, &train, &val, cfg)
}

/// Like [`train_model`] with an explicit validation set; an empty one disables early stopping.
pub fn train_with_validation<T: Scalar>(
    model: &mut QualityModel<T>,
    train: &[&Example<T>],
    val: &[&Example<T>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut report = TrainReport {
        train_ids: train.iter().map(|e| e.id.clone()).collect(),
        val_ids: val.iter().map(|e| e.id.clone()).collect(),
        ..TrainReport::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut adam = Adam::new(cfg.adam, model.params());

    let mut best = if val.is_empty() { None } else { Some((dataset_loss(model, val)?, model.params().clone(), 0)) };
    report.initial_val_loss = best.as_ref().map(|b| b.0);
    let mut stale = 0;
    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                break 'epochs;
            }
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| train[i]).collect();
            let l = train_step(model, &mut adam, &batch, |_| true)?;
            report.step_losses.push(l);
            report.steps += 1;
            sum += l;
            batches += 1;
        }
        report.epoch_train_losses.push(sum / batches.max(1) as f64);
        if let Some((best_loss, best_params, best_epoch)) = best.as_mut() {
            let v = dataset_loss(model, val)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
            }
            report.epoch_val_losses.push(v);
            if v < *best_loss - cfg.min_delta {
                *best_loss = v;
                *best_params = model.params().clone();
                *best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    match best {
        Some((_, params, epoch)) => {
            *model.params_mut() = params;
            report.best_epoch = epoch;
        }
        None => report.best_epoch = report.epoch_train_losses.len(),
    }
    if !model.params().all_finite() {
        return Err(Error::NonFinite("trained weights".into()));
    }
    Ok(report)
}

/// Trains a fresh model, or continues from `warm_start` when given.
pub fn train<T: Scalar>(
    data: &[Example<T>],
    model_cfg: &PredictorConfig,
    cfg: &TrainConfig,
    warm_start: Option<&QualityModel<T>>,
) -> Result<(QualityModel<T>, TrainReport)> {
    let mut model = match warm_start {
        Some(m) if m.config() != model_cfg => {
            return Err(Error::InvalidConfig("warm-start weights have a different architecture".into()))
        }
        Some(m) => m.clone(),
        None => QualityModel::new(model_cfg.clone(), derive_seed(cfg.seed, "init"))?,
    };
    let report = train_model(&mut model, data, cfg)?;
    Ok((model, report))
}
