use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters: warmup schedule, batch size, stopping, EMA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub base_lr: f64,
    pub warmup_start_lr: f64,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stop patience in tune evaluations (one per epoch).
    pub patience: usize,
    pub ema_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            base_lr: 0.0008,
            warmup_start_lr: 0.0001,
            warmup_epochs: 3,
            batch_size: 64,
            max_epochs: 12,
            patience: 5,
            ema_decay: 0.9999,
            momentum: 0.9,
            weight_decay: 0.00004,
            nesterov: false,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_start_lr > 0.0 && self.warmup_start_lr <= self.base_lr) {
            return Err(Error::InvalidConfig(format!(
                "warmup_start_lr {} must satisfy 0 < warmup_start_lr <= base_lr {}",
                self.warmup_start_lr, self.base_lr
            )));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ema_decay {} outside (0,1)",
                self.ema_decay
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "momentum {} must lie in [0,1) and weight_decay {} must be non-negative",
                self.momentum, self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Learning rate at a global step: linear from `warmup_start_lr` at step 0 to
/// `base_lr` at `warmup_epochs * steps_per_epoch`, constant afterwards.
pub fn lr_at(step: usize, schedule: &TrainSchedule, steps_per_epoch: usize) -> f64 {
    let warmup_steps = schedule.warmup_epochs * steps_per_epoch;
    if warmup_steps == 0 || step >= warmup_steps {
        return schedule.base_lr;
    }
    let t = step as f64 / warmup_steps as f64;
    schedule.warmup_start_lr + (schedule.base_lr - schedule.warmup_start_lr) * t
}

/// Early stopping on a lower-is-better history: true once the trailing run of
/// evaluations without a strict improvement over the best value reaches
/// `patience` (at least 1).
pub fn should_stop(history: &[f64], patience: usize) -> bool {
    let mut best = f64::INFINITY;
    let mut streak = 0usize;
    for &v in history {
        if v < best {
            best = v;
            streak = 0;
        } else {
            streak += 1;
        }
    }
    streak >= patience.max(1)
}
