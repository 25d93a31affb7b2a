use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::net::{init_params, loss_and_grad, ConvNetSpec, Tensor};
use crate::error::{precondition, Error, Result};
use crate::seeding::{derive_seed, derived_rng};

/// Constant learning rate over epochs `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrPhase {
    pub start: usize,
    pub end: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_schedule: Vec<LrPhase>,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

const PHASE_RATES: [f64; 4] = [1e-3, 1e-4, 1e-3, 1e-4];

impl TrainConfig {
    /// Four equal phases alternating 1e-3 and 1e-4 (100 epochs each at 400).
    pub fn scaled(epochs: usize, batch_size: usize, seed: u64) -> Self {
        let mut lr_schedule = Vec::new();
        for (k, lr) in PHASE_RATES.iter().enumerate() {
            let start = epochs * k / 4;
            let end = epochs * (k + 1) / 4;
            if end > start {
                lr_schedule.push(LrPhase {
                    start,
                    end,
                    lr: *lr,
                });
            }
        }
        Self {
            epochs,
            lr_schedule,
            batch_size,
            seed,
            adam: AdamConfig::default(),
        }
    }

    /// Warm-start refinement: 15 epochs at 1e-3 then 10 at 1e-4.
    pub fn refinement(batch_size: usize, seed: u64) -> Self {
        Self {
            epochs: 25,
            lr_schedule: vec![
                LrPhase {
                    start: 0,
                    end: 15,
                    lr: 1e-3,
                },
                LrPhase {
                    start: 15,
                    end: 25,
                    lr: 1e-4,
                },
            ],
            batch_size,
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return precondition("batch_size must be at least 1");
        }
        let mut cursor = 0;
        for phase in &self.lr_schedule {
            if phase.start != cursor || phase.end <= phase.start {
                return Err(Error::Config(format!(
                    "learning-rate phases must partition [0, {}) in order",
                    self.epochs
                )));
            }
            if !(phase.lr.is_finite() && phase.lr > 0.0) {
                return Err(Error::Config(format!("bad learning rate {}", phase.lr)));
            }
            cursor = phase.end;
        }
        if cursor != self.epochs {
            return Err(Error::Config(format!(
                "learning-rate phases cover [0, {cursor}) but epochs = {}",
                self.epochs
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule
            .iter()
            .find(|p| (p.start..p.end).contains(&epoch))
            .map(|p| p.lr)
            .expect("validated schedule covers every epoch")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    /// Mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains `spec` to map `inputs` to `targets`. Starts from `warm_start` when
/// given, otherwise from seeded Glorot initialization.
pub fn train_supervised(
    spec: &ConvNetSpec,
    inputs: &Tensor,
    targets: &Tensor,
    cfg: &TrainConfig,
    warm_start: Option<&[f64]>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.count == 0 {
        return precondition("training data is empty");
    }
    if inputs.count != targets.count {
        return Err(Error::Dimension {
            context: "training pairs",
            expected: inputs.count.to_string(),
            actual: targets.count.to_string(),
        });
    }
    let mut params = match warm_start {
        Some(p) => {
            if p.len() != spec.param_count() {
                return Err(Error::Dimension {
                    context: "warm start parameters",
                    expected: spec.param_count().to_string(),
                    actual: p.len().to_string(),
                });
            }
            p.to_vec()
        }
        None => init_params(spec, derive_seed(cfg.seed, "init", 0)),
    };
    let mut state = AdamState::new(params.len());
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..inputs.count).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut derived_rng(cfg.seed, "epoch", epoch as u64));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grads) =
                loss_and_grad(spec, &params, &inputs.select(chunk), &targets.select(chunk))?;
            adam_step(&mut params, &grads, &mut state, lr, &cfg.adam);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: lr {lr:e}, loss {mean:.6e}");
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { params, loss_curve })
}

/// Self-supervised training: the targets are the inputs.
pub fn train_autoencoder(
    spec: &ConvNetSpec,
    data: &Tensor,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_supervised(spec, data, data, cfg, None)
}

/// Direct `b -> x` training, optionally refining earlier parameters.
pub fn train_end_to_end(
    spec: &ConvNetSpec,
    b: &Tensor,
    x: &Tensor,
    cfg: &TrainConfig,
    warm_start: Option<&[f64]>,
) -> Result<TrainOutcome> {
    train_supervised(spec, b, x, cfg, warm_start)
}
