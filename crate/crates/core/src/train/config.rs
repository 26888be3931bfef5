use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Steps between learning-rate halvings.
    pub lr_halving_interval: u64,
    pub batch_size: usize,
    /// Edge of the LR-space training patch; HR patches are `scale` times larger.
    pub lr_patch: usize,
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Steps between checkpoints; 0 writes only the final one.
    pub checkpoint_interval: u64,
    /// Steps between validation passes; 0 disables them.
    pub eval_interval: u64,
    /// Steps between log records.
    pub log_interval: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lr_halving_interval: 200_000,
            batch_size: 16,
            lr_patch: 48,
            total_steps: 1000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_interval: 1000,
            eval_interval: 0,
            log_interval: 10,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("lr_halving_interval", self.lr_halving_interval as f64),
            ("batch_size", self.batch_size as f64),
            ("lr_patch", self.lr_patch as f64),
            ("log_interval", self.log_interval as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }

    /// `lr · 0.5^⌊step / interval⌋` for the step about to run.
    pub fn learning_rate(&self, step: u64) -> f64 {
        let halvings = (step / self.lr_halving_interval).min(1074) as i32;
        self.lr * 0.5f64.powi(halvings)
    }
}
