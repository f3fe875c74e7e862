//! Model training: MSE loss, Adam updates, shuffled mini-batches, a
//! train/validation split and early stopping on the validation plateau.
//! Deterministic for a fixed seed: the split, the shuffles and the update
//! order are all driven by one seeded generator.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DatasetRecord, MhgatModel};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T = f64> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, param_count: usize) -> Self {
        let t = T::from_f64_lossy;
        Adam {
            lr,
            beta1: t(0.9),
            beta2: t(0.999),
            eps: t(1e-8),
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
            step: 0,
        }
    }

    /// One bias-corrected update in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Computes the batch loss, applies one Adam step and returns the pre-step
/// loss. Errors on a non-finite loss.
pub fn backward_and_step<T: Scalar>(
    model: &mut MhgatModel<T>,
    batch: &[&DatasetRecord<T>],
    adam: &mut Adam<T>,
) -> Result<T, TrainError> {
    let (loss, grads) = model.loss_and_grads(batch);
    if !loss.is_finite() {
        return Err(TrainError::Diverged { epoch: 0, batch: 0 });
    }
    let mut flat = model.params.flatten();
    adam.step(&mut flat, &grads);
    model.params.load_flat(&flat);
    Ok(loss)
}

/// Training configuration. Defaults: learning rate 1e-3, batch 32, up to 50
/// epochs with patience 5, an 80/20 train/validation split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig<T = f64> {
    pub lr: T,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_ratio: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        TrainConfig {
            lr: T::from_f64_lossy(1e-3),
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            val_ratio: T::from_f64_lossy(0.2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats<T = f64> {
    pub epoch: usize,
    pub train_mse: T,
    pub val_mse: T,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog<T = f64> {
    pub epochs: Vec<EpochStats<T>>,
    pub best_epoch: usize,
    pub best_val_mse: T,
    pub train_records: usize,
    pub val_records: usize,
}

/// Trains in place and returns the log. The model is left at the parameters
/// of the best validation epoch.
pub fn train<T: Scalar>(
    model: &mut MhgatModel<T>,
    dataset: &[DatasetRecord<T>],
    config: &TrainConfig<T>,
) -> Result<TrainLog<T>, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let val_len = ((dataset.len() as f64) * config.val_ratio.to_f64_lossy()).round() as usize;
    let val_len = val_len.min(dataset.len().saturating_sub(1));
    let (val_idx, train_idx) = indices.split_at(val_len);
    let val: Vec<DatasetRecord<T>> = val_idx.iter().map(|&i| dataset[i].clone()).collect();
    let mut train_order: Vec<usize> = train_idx.to_vec();

    let mut adam = Adam::new(config.lr, model.params.count());
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mse: T::infinity(),
        train_records: train_order.len(),
        val_records: val.len(),
    };
    let mut best_params = model.params.flatten();
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        train_order.shuffle(&mut rng);
        let mut train_loss = T::zero();
        let mut batches = 0usize;
        for (bi, chunk) in train_order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&DatasetRecord<T>> = chunk.iter().map(|&i| &dataset[i]).collect();
            let loss = backward_and_step(model, &batch, &mut adam).map_err(|_| {
                TrainError::Diverged { epoch, batch: bi }
            })?;
            train_loss += loss;
            batches += 1;
        }
        train_loss /= T::from_usize(batches.max(1)).unwrap();
        let val_mse = if val.is_empty() { train_loss } else { model.mse(&val) };
        log.epochs.push(EpochStats {
            epoch,
            train_mse: train_loss,
            val_mse,
            wall_ms: started.elapsed().as_secs_f64() * 1000.0,
        });

        if val_mse < log.best_val_mse {
            log.best_val_mse = val_mse;
            log.best_epoch = epoch;
            best_params = model.params.flatten();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.params.load_flat(&best_params);
    Ok(log)
}
