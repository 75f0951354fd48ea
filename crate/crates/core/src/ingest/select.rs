use serde::{Deserialize, Serialize};

use super::source::AcquisitionRecord;
use crate::error::{Error, Result};

/// Slack when comparing a valid fraction to a lowered threshold, so that
/// `0.9 − 2·0.1` still admits a fraction of exactly `0.7`.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

/// Adaptive valid-fraction thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub threshold: f64,
    pub step: f64,
    pub floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            threshold: 0.9,
            step: 0.1,
            floor: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let Thresholds { threshold, step, floor } = *self;
        if !(0.0..=1.0).contains(&threshold) || !(0.0..=1.0).contains(&floor) {
            return Err(Error::Config("threshold and floor must lie in [0, 1]".into()));
        }
        if floor > threshold {
            return Err(Error::Config(format!("floor {floor} above threshold {threshold}")));
        }
        if !(step > 0.0) {
            return Err(Error::Config(format!("step {step} must be positive")));
        }
        Ok(())
    }
}

/// `threshold, threshold − step, …` while at or above `floor`, ending at
/// `floor` itself when the steps do not land on it.
pub fn threshold_sequence(t: &Thresholds) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let thr = t.threshold - k as f64 * t.step;
        if thr < t.floor - THRESHOLD_TOLERANCE {
            break;
        }
        out.push(thr);
        k += 1;
    }
    if out.last().is_some_and(|&l| l - t.floor > THRESHOLD_TOLERANCE) {
        out.push(t.floor);
    }
    out
}

/// Outcome of selecting one acquisition for a month.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthlyChoice {
    /// Index into the month's records.
    pub index: usize,
    /// Threshold the record passed; for a fallback, the last one tried.
    pub threshold: f64,
    /// No record reached the floor; the most valid record was taken.
    pub fallback: bool,
}

/// Earliest record meeting the threshold, lowering it stepwise down to the
/// floor, else the record with the largest valid fraction (earliest on
/// ties), flagged. `None` when there are no records.
pub fn select_monthly(records: &[AcquisitionRecord], t: &Thresholds) -> Result<Option<MonthlyChoice>> {
    t.validate()?;
    if records.windows(2).any(|w| w[0].date > w[1].date) {
        return Err(Error::Precondition("acquisition records are not date ordered".into()));
    }
    if records.is_empty() {
        return Ok(None);
    }
    let seq = threshold_sequence(t);
    for &thr in &seq {
        if let Some(index) = records
            .iter()
            .position(|r| r.valid_fraction >= thr - THRESHOLD_TOLERANCE)
        {
            return Ok(Some(MonthlyChoice { index, threshold: thr, fallback: false }));
        }
    }
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        if r.valid_fraction > records[best].valid_fraction {
            best = i;
        }
    }
    Ok(Some(MonthlyChoice {
        index: best,
        threshold: *seq.last().expect("non-empty sequence"),
        fallback: true,
    }))
}
