//! Minibatch SGD.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, predict, sample_loss_and_grad, GradBundle, ModelParams};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::metrics::weighted_accuracy;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed of the shuffling and of the augmentation noise.
    pub seed: u64,
    /// Reuse the same noise for a given item in every epoch.
    pub freeze_samples: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            freeze_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch, evaluated before each batch update.
    pub loss: f64,
    /// Weighted accuracy of the same in-epoch predictions.
    pub train_wacc: f64,
    pub val_wacc: Option<f64>,
}

/// Noise seed of item `index` at `epoch`.
pub fn noise_seed(cfg: &TrainConfig, epoch: usize, index: usize) -> u64 {
    let round = if cfg.freeze_samples { 0 } else { epoch as u64 + 1 };
    derive_seed(cfg.seed, round, index as u64)
}

/// Trains `p` on `data`, optionally scoring `val` after every epoch with one
/// forward pass per item.
pub fn train_sgd(
    mut p: ModelParams,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if data.class_count() != p.classes {
        return Err(Error::shape(format!(
            "model has {} classes, data has {}",
            p.classes,
            data.class_count()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut preds = vec![0; data.len()];
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = &data.items[i];
                    sample_loss_and_grad(&p, x, *y, noise_seed(cfg, epoch, i))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = GradBundle::zeros_like(&p);
            let scale = 1.0 / batch.len() as f64;
            for (&i, (loss, probs, g)) in batch.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                loss_sum += loss;
                preds[i] = argmax(probs);
                grad.accumulate(g, scale);
            }
            if cfg.learning_rate != 0.0 {
                for (w, g) in p.blocks_mut().into_iter().zip(grad.blocks()) {
                    w.iter_mut()
                        .zip(g)
                        .for_each(|(w, g)| *w -= cfg.learning_rate * g);
                }
            }
        }
        let val_wacc = match val {
            Some(v) => Some(evaluate(&p, v, derive_seed(cfg.seed, u64::MAX - 1, epoch as u64))?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_wacc: weighted_accuracy(&preds, &data.labels(), p.classes)?,
            val_wacc,
        });
    }
    Ok((p, history))
}

/// Predictions for every item, noise seeded per item from `seed`.
pub fn predict_all(p: &ModelParams, data: &Dataset, seed: u64) -> Result<Vec<usize>> {
    data.items
        .par_iter()
        .enumerate()
        .map(|(i, (x, _))| predict(p, x, derive_seed(seed, 0, i as u64)))
        .collect()
}

/// Weighted accuracy of one stochastic pass over `data`.
pub fn evaluate(p: &ModelParams, data: &Dataset, seed: u64) -> Result<f64> {
    let preds = predict_all(p, data, seed)?;
    weighted_accuracy(&preds, &data.labels(), p.classes.max(data.class_count()))
}
