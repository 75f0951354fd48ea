use ndarray::{Array2, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::synth::LabeledChip;

/// A labeled chip: one or more frames of the same location and a per-pixel
/// binary label map.
#[derive(Clone, Debug)]
pub struct ProbeChip<'a> {
    pub frames: Vec<ArrayView3<'a, f32>>,
    pub labels: ArrayView2<'a, u8>,
}

impl<'a> ProbeChip<'a> {
    pub fn from_labeled(chip: &'a LabeledChip, frames: &[usize]) -> Self {
        ProbeChip {
            frames: frames.iter().map(|&t| chip.sits.cube.frame(t)).collect(),
            labels: chip.labels.view(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            steps: 500,
            lr: 0.05,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// IoU of class 1 on the held-out chips.
    pub iou: f64,
    /// IoU of the class holding the majority of held-out pixels.
    pub iou_majority: f64,
    pub accuracy: f64,
}

/// Intersection over union of `class` between a prediction and the truth.
/// An empty union counts as a perfect match.
pub fn iou(pred: ArrayView2<u8>, truth: ArrayView2<u8>, class: u8) -> f64 {
    assert_eq!(pred.dim(), truth.dim(), "iou shapes");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let (a, b) = (p == class, t == class);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn features(model: &Model<f32>, chip: &ProbeChip) -> Result<Array2<f64>> {
    if chip.frames.is_empty() {
        return Err(Error::Precondition("probe chip without frames".into()));
    }
    let v = &model.config().vit;
    if chip.labels.dim() != (v.image_size, v.image_size) {
        return Err(Error::Precondition(format!(
            "label map {:?} does not match image size {}",
            chip.labels.dim(),
            v.image_size
        )));
    }
    let (n, d) = (v.num_patches(), v.dim);
    let mut out = Array2::zeros((n, d * chip.frames.len()));
    for (f, frame) in chip.frames.iter().enumerate() {
        let z = model.encode(*frame)?;
        for i in 0..n {
            for j in 0..d {
                out[[i, f * d + j]] = z[[i + 1, j]] as f64;
            }
        }
    }
    Ok(out)
}

/// Positive-pixel fraction of each patch, in token order.
fn patch_fractions(labels: ArrayView2<u8>, patch: usize) -> Vec<f64> {
    let g = labels.nrows() / patch;
    let mut out = Vec::with_capacity(g * g);
    for py in 0..g {
        for px in 0..g {
            let block = labels.slice(ndarray::s![py * patch..(py + 1) * patch, px * patch..(px + 1) * patch]);
            out.push(block.iter().filter(|&&l| l == 1).count() as f64 / (patch * patch) as f64);
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fits a logistic classifier on frozen patch tokens (one logit per token,
/// frames concatenated), then scores held-out chips with each token's class
/// broadcast over its patch.
pub fn linear_probe(
    model: &Model<f32>,
    train: &[ProbeChip],
    test: &[ProbeChip],
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Precondition("probe needs train and test chips".into()));
    }
    let patch = model.config().vit.patch_size;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for chip in train {
        let f = features(model, chip)?;
        for (row, y) in f.outer_iter().zip(patch_fractions(chip.labels, patch)) {
            xs.push(row.to_vec());
            ys.push(y);
        }
    }
    let dim = xs[0].len();
    let m = xs.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / m).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| {
            let var = xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / m;
            var.sqrt().max(1e-8)
        })
        .collect();
    let standardize = |x: &mut [f64]| {
        for j in 0..dim {
            x[j] = (x[j] - mean[j]) / sd[j];
        }
    };
    for x in xs.iter_mut() {
        standardize(x);
    }

    // full-batch Adam on the soft-label cross-entropy
    let mut w = vec![0.0; dim + 1];
    let (mut mo, mut ve) = (vec![0.0; dim + 1], vec![0.0; dim + 1]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut grad = vec![0.0; dim + 1];
    for step in 1..=cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in xs.iter().zip(&ys) {
            let s = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            let r = sigmoid(s) - y;
            for j in 0..dim {
                grad[j] += r * x[j];
            }
            grad[dim] += r;
        }
        for j in 0..=dim {
            grad[j] /= m;
            if j < dim {
                grad[j] += cfg.l2 * w[j];
            }
            mo[j] = b1 * mo[j] + (1.0 - b1) * grad[j];
            ve[j] = b2 * ve[j] + (1.0 - b2) * grad[j] * grad[j];
            let mh = mo[j] / (1.0 - b1.powi(step as i32));
            let vh = ve[j] / (1.0 - b2.powi(step as i32));
            w[j] -= cfg.lr * mh / (vh.sqrt() + eps);
        }
    }

    let size = model.config().vit.image_size;
    let g = size / patch;
    let mut preds = Vec::with_capacity(test.len() * size * size);
    let mut truth = Vec::with_capacity(test.len() * size * size);
    for chip in test {
        let f = features(model, chip)?;
        for y in 0..size {
            for x in 0..size {
                let mut row = f.row((y / patch) * g + x / patch).to_vec();
                standardize(&mut row);
                let s = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim];
                preds.push((s > 0.0) as u8);
                truth.push(chip.labels[[y, x]]);
            }
        }
    }
    let shape = (truth.len(), 1);
    let pred = Array2::from_shape_vec(shape, preds).expect("shape");
    let truth = Array2::from_shape_vec(shape, truth).expect("shape");
    let ones = truth.iter().filter(|&&t| t == 1).count();
    let majority = if 2 * ones > truth.len() { 1 } else { 0 };
    let correct = pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
    Ok(ProbeReport {
        iou: iou(pred.view(), truth.view(), 1),
        iou_majority: iou(pred.view(), truth.view(), majority),
        accuracy: correct as f64 / truth.len() as f64,
    })
}
