//! Optimisation: label-smoothed loss, AdamW, the learning-rate schedule,
//! early stopping, metrics and checkpoints.

pub mod checkpoint;
pub mod loss;
pub mod metrics;
pub mod objective;
pub mod optim;
pub mod schedule;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::AugmentConfig;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainMeta};
pub use loss::{label_smoothed_ce, softmax};
pub use metrics::{accuracy, Accuracy, EpochRecord};
pub use objective::{batch_loss, batch_loss_and_grad, predict, Batch};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::{LrSchedule, ScheduleConfig, ScheduleMode};
pub use trainer::{evaluate, finetune, prepare_eval_inputs, train, TrainOutcome, TrainState, BEST_CHECKPOINT, METRICS_LOG, STATE_CHECKPOINT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Floor of the cosine schedule as a fraction of `lr`.
    pub lr_min_ratio: f64,
    pub epochs_max: usize,
    pub early_stop_patience: usize,
    pub scheduler: ScheduleMode,
    pub scheduler_patience: usize,
    pub cycle_len: usize,
    pub label_smoothing: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Training-time augmentation; `None` trains on deterministic inputs.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            lr_min_ratio: 0.01,
            epochs_max: 400,
            early_stop_patience: 60,
            scheduler: ScheduleMode::PlateauStep,
            scheduler_patience: 20,
            cycle_len: 10,
            label_smoothing: 0.1,
            batch_size: 16,
            weight_decay: 0.01,
            seed: 0,
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0) {
            return fail("lr must be positive");
        }
        if !(self.lr_min_ratio > 0.0 && self.lr_min_ratio <= 1.0) {
            return fail("lr_min_ratio must lie in (0, 1]");
        }
        if self.early_stop_patience == 0 || self.scheduler_patience == 0 {
            return fail("patiences must be at least 1");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return fail("label_smoothing must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.cycle_len == 0 {
            return fail("batch_size and cycle_len must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be nonnegative");
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            mode: self.scheduler,
            lr: self.lr,
            lr_min: self.lr * self.lr_min_ratio,
            cycle_len: self.cycle_len,
            patience: self.scheduler_patience,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}
