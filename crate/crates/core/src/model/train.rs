use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{AdamW, LrSchedule};
use super::{Model, Task};
use crate::cube::{FrequencyMap, TimeSeriesCube};
use crate::error::{Error, Result};
use crate::sampling::batches_from_pairs;

/// Abort when an epoch's mean loss exceeds this multiple of the first batch loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; none when unset.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr: 1e-3,
            warmup_epochs: 0,
            weight_decay: 0.05,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            peak: self.lr,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.weight_decay < 0.0 || self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("weight_decay and clip_norm must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Frame pairs of one cube, plus its frequency map for the frequency task.
#[derive(Clone, Debug)]
pub struct TrainData<'a> {
    pub cube: &'a TimeSeriesCube,
    pub pairs: Vec<(usize, usize)>,
    pub freq_map: Option<&'a FrequencyMap>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub lrs: Vec<f64>,
    /// Loss of the very first batch.
    pub initial_loss: f64,
    pub steps: u64,
}

/// Epoch `e` shuffles with this seed.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64)
}

/// Trains `task` in place. Only parameters the task's loss depends on are updated.
pub fn train(model: &mut Model<f32>, task: Task, data: &TrainData, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    data.cube.require_canonical_bands()?;
    if data.cube.has_missing() {
        return Err(Error::Precondition(
            "cube has missing pixels; fill them before training".into(),
        ));
    }
    let schedule = cfg.schedule();
    let mut opt = AdamW::new(model.params(), cfg.weight_decay);
    let mut report = TrainReport {
        task,
        epoch_losses: Vec::with_capacity(cfg.epochs),
        lrs: Vec::with_capacity(cfg.epochs),
        initial_loss: f64::NAN,
        steps: 0,
    };
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(epoch);
        let batches = batches_from_pairs(
            data.cube,
            &data.pairs,
            cfg.batch_size,
            epoch_seed(cfg.seed, epoch),
            data.freq_map,
        )?;
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in batches {
            let (loss, grads) = model.loss_and_grad(task, &batch)?;
            let loss = loss as f64;
            if report.initial_loss.is_nan() {
                report.initial_loss = loss;
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss,
                    limit: DIVERGENCE_FACTOR * report.initial_loss,
                });
            }
            let active: Vec<bool> = grads.grads.iter().map(Option::is_some).collect();
            let params = model.params_mut();
            params.zero_grad();
            params.accumulate(&grads, 1.0);
            if let Some(name) = params.non_finite_grad() {
                return Err(Error::NanGradient {
                    param: name.to_string(),
                    step: opt.steps() as usize + 1,
                });
            }
            if let Some(max) = cfg.clip_norm {
                clip_grad_norm(params, max);
            }
            opt.step(params, lr, &active);
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let mean = total / count as f64;
        log::info!("{task} epoch {epoch}: loss {mean:.6} lr {lr:.3e}");
        report.epoch_losses.push(mean);
        report.lrs.push(lr);
        let limit = DIVERGENCE_FACTOR * report.initial_loss;
        if !(mean <= limit) {
            return Err(Error::Diverged { epoch, loss: mean, limit });
        }
    }
    report.steps = opt.steps();
    Ok(report)
}

fn clip_grad_norm(params: &mut super::ParamStore<f32>, max: f64) {
    let norm = params.grad_norm();
    if norm > max {
        params.scale_grads((max / norm) as f32);
    }
}

/// Writes `epoch,loss` rows with a header.
pub fn write_loss_trace(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        out.push_str(&format!("{e},{l:.9e}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
