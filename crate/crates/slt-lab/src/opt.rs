//! SGD with momentum, weight decay, and learning-rate scheduling.
//!
//! Update rule (decoupled from what the parameters mean, so the same
//! stepper trains dense networks and popup scores):
//!
//! ```text
//! v     <- momentum * v + g + weight_decay * theta
//! theta <- theta - lr(step) * v
//! ```
//!
//! Cosine annealing: `lr(step) = lr0 * 0.5 * (1 + cos(pi * step / total_steps))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Architecture, ParamTensors};

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `lr(step) = lr0`.
    Constant,
    /// Half-cosine decay from `lr0` to 0 over `total_steps`.
    Cosine { total_steps: usize },
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
}

impl SgdConfig {
    /// Benchmark defaults: momentum 0.9, weight decay 5e-4, cosine decay
    /// from 0.1, batch size 32.
    pub fn benchmark(total_steps: usize) -> Self {
        SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            schedule: LrSchedule::Cosine { total_steps },
            batch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1".to_string()));
        }
        if let LrSchedule::Cosine { total_steps } = self.schedule {
            if total_steps == 0 {
                return Err(Error::config("cosine schedule needs total_steps >= 1".to_string()));
            }
        }
        Ok(())
    }

    /// Learning rate at a given global step (0-based). Steps at or past
    /// `total_steps` clamp to the final value.
    pub fn lr_at(&self, step: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { total_steps } => {
                let frac = (step as f64 / total_steps as f64).min(1.0);
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub velocity: ParamTensors,
}

impl SgdState {
    pub fn new(arch: &Architecture) -> Self {
        SgdState {
            velocity: ParamTensors::zeros(arch),
        }
    }
}

/// One SGD step over a full parameter set (see module docs for the rule).
///
/// Panics when gradient or state shapes do not match the parameters.
pub fn sgd_step(
    weights: &mut [ndarray::Array2<f64>],
    biases: &mut [ndarray::Array1<f64>],
    grads: &ParamTensors,
    state: &mut SgdState,
    cfg: &SgdConfig,
    step: usize,
) {
    assert_eq!(weights.len(), grads.weights.len(), "gradient layer count mismatch");
    assert_eq!(biases.len(), grads.biases.len(), "gradient layer count mismatch");
    let lr = cfg.lr_at(step);
    for l in 0..weights.len() {
        let v = &mut state.velocity.weights[l];
        assert_eq!(v.dim(), weights[l].dim(), "velocity shape mismatch at layer {l}");
        v.mapv_inplace(|vv| vv * cfg.momentum);
        *v += &grads.weights[l];
        if cfg.weight_decay != 0.0 {
            v.zip_mut_with(&weights[l], |vv, &tv| *vv += cfg.weight_decay * tv);
        }
        weights[l].zip_mut_with(v, |tv, &vv| *tv -= lr * vv);
    }
    for l in 0..biases.len() {
        let v = &mut state.velocity.biases[l];
        assert_eq!(v.len(), biases[l].len(), "velocity length mismatch at layer {l}");
        v.mapv_inplace(|vv| vv * cfg.momentum);
        *v += &grads.biases[l];
        if cfg.weight_decay != 0.0 {
            v.zip_mut_with(&biases[l], |vv, &tv| *vv += cfg.weight_decay * tv);
        }
        biases[l].zip_mut_with(v, |tv, &vv| *tv -= lr * vv);
    }
}
