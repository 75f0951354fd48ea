use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::Real;

/// Per-epoch learning rate: linear warmup to `peak`, then cosine decay to 0
/// at the final epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_epochs: usize,
    pub epochs: usize,
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let w = self.warmup_epochs;
        if epoch < w {
            return self.peak * (epoch + 1) as f64 / (w + 1) as f64;
        }
        let span = self.epochs.saturating_sub(1 + w).max(1) as f64;
        let progress = ((epoch - w) as f64 / span).min(1.0);
        0.5 * self.peak * (1.0 + (PI * progress).cos())
    }
}

/// Adam with decoupled weight decay, applied to matrices only.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new<F: Real>(params: &ParamStore<F>, weight_decay: f64) -> Self {
        let zeros = || (0..params.len()).map(|i| vec![0.0; params.value(i).len()]).collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update from the store's gradient buffers. Parameters with
    /// `active[i] == false` are left untouched.
    pub fn step<F: Real>(&mut self, params: &mut ParamStore<F>, lr: f64, active: &[bool]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            if !active[i] {
                continue;
            }
            let decay = if params.shape(i).0 > 1 { self.weight_decay } else { 0.0 };
            let g: Vec<f64> = params.grad(i).iter().map(|v| v.f64()).collect();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in params.value_mut(i).iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let upd = (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
                let x = w.f64();
                *w = F::of(x - lr * (upd + decay * x));
            }
        }
    }
}
