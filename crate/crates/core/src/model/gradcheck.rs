use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Model, Task};
use crate::cube::BitemporalSample;
use crate::error::{Error, Result};

/// Denominator floor of the relative error, for coordinates whose gradient is
/// essentially zero.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub task: Task,
    pub coords: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares analytic gradients of `task`'s batch loss with central
/// differences of step `h` on `coords` sampled coordinates. Every parameter
/// the loss depends on gets at least one coordinate; the rest are uniform over
/// scalars.
pub fn grad_check(
    model: &mut Model<f64>,
    task: Task,
    batch: &[BitemporalSample],
    coords: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grad(task, batch)?;
    let live: Vec<usize> = (0..grads.grads.len()).filter(|&i| grads.grads[i].is_some()).collect();
    if live.is_empty() {
        return Err(Error::Precondition("loss depends on no parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = live
        .iter()
        .map(|&p| (p, rng.random_range(0..model.params().value(p).len())))
        .collect();
    let lens: Vec<usize> = live.iter().map(|&p| model.params().value(p).len()).collect();
    let pick = WeightedIndex::new(&lens).expect("non-empty parameters");
    while picks.len() < coords {
        let i = pick.sample(&mut rng);
        picks.push((live[i], rng.random_range(0..lens[i])));
    }

    let mut report = GradCheckReport {
        task,
        coords: picks.len(),
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (p, k) in picks {
        let analytic = grads.grads[p].as_ref().expect("live")[k];
        let orig = model.params().value(p)[k];
        model.params_mut().value_mut(p)[k] = orig + h;
        let up = model.loss(task, batch)?;
        model.params_mut().value_mut(p)[k] = orig - h;
        let down = model.loss(task, batch)?;
        model.params_mut().value_mut(p)[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
        if rel > report.max_rel_err || report.worst_param.is_empty() {
            report.max_rel_err = rel;
            report.worst_param = model.params().name(p).to_string();
            report.worst_index = k;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
