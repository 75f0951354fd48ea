//! Sinusoidal positional encodings and the month/year temporal encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestamp::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    /// Encoding width, even and at least 4.
    pub width: usize,
    /// Wavelength base.
    pub base: f64,
    /// Calendar year mapped to year position 0.
    pub year_epoch: i32,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            width: 64,
            base: 10_000.0,
            year_epoch: 2016,
        }
    }
}

impl EncodingConfig {
    pub fn with_width(width: usize) -> Self {
        EncodingConfig {
            width,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 4 || !self.width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "encoding width {} must be even and >= 4",
                self.width
            )));
        }
        if !(self.base > 1.0) {
            return Err(Error::Config(format!("encoding base {} must exceed 1", self.base)));
        }
        Ok(())
    }
}

/// `[sin(i/B^(0/D)), cos(i/B^(0/D)), sin(i/B^(2/D)), cos(i/B^(2/D)), …]`.
pub fn sinusoidal_pe(position: f64, cfg: &EncodingConfig) -> Vec<f64> {
    let d = cfg.width;
    let mut out = Vec::with_capacity(d);
    for j in 0..d / 2 {
        let angle = position / cfg.base.powf(2.0 * j as f64 / d as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    out
}

/// `[PE(month); PE(year − epoch)]`, width `2·D`. Months enter as 1..=12.
pub fn temporal_encoding(t: Timestamp, cfg: &EncodingConfig) -> Vec<f64> {
    let mut out = sinusoidal_pe(t.month() as f64, cfg);
    out.extend(sinusoidal_pe((t.year() - cfg.year_epoch) as f64, cfg));
    out
}

/// Row `k` is `PE(k)`, in row-major patch order. Flat `n×D`.
pub fn patch_positions(n: usize, cfg: &EncodingConfig) -> Vec<f64> {
    (0..n).flat_map(|k| sinusoidal_pe(k as f64, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestamp::{MAX_YEAR, MIN_YEAR};

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn position_zero() {
        let pe = sinusoidal_pe(0.0, &EncodingConfig::with_width(8));
        assert_eq!(pe, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn position_one_width_four() {
        // independent values: sin(1), cos(1), sin(0.01), cos(0.01)
        let want = [0.8414709848078965, 0.5403023058681398, 0.009999833334166664, 0.9999500004166653];
        let pe = sinusoidal_pe(1.0, &EncodingConfig::with_width(4));
        for (a, b) in pe.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn bounded() {
        let cfg = EncodingConfig::with_width(32);
        for i in (0..1_000_000).step_by(9973) {
            assert!(sinusoidal_pe(i as f64, &cfg).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn epoch_year_half_is_identity_pattern() {
        let cfg = EncodingConfig::with_width(8);
        let te = temporal_encoding(Timestamp::new(2016, 1).unwrap(), &cfg);
        assert_eq!(te.len(), 16);
        assert_eq!(&te[..8], sinusoidal_pe(1.0, &cfg).as_slice());
        assert_eq!(&te[8..], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn same_month_other_year_differs() {
        let cfg = EncodingConfig::with_width(16);
        let a = temporal_encoding(Timestamp::new(2018, 6).unwrap(), &cfg);
        let b = temporal_encoding(Timestamp::new(2019, 6).unwrap(), &cfg);
        assert!(l2(&a, &b) > 0.1);
    }

    #[test]
    fn all_supported_timestamps_are_distinct() {
        let cfg = EncodingConfig::with_width(16);
        let all: Vec<Vec<f64>> = (MIN_YEAR..=MAX_YEAR)
            .flat_map(|y| (1..=12).map(move |m| Timestamp::new(y, m).unwrap()))
            .map(|t| temporal_encoding(t, &cfg))
            .collect();
        let mut min = f64::INFINITY;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                min = min.min(l2(&all[i], &all[j]));
            }
        }
        assert!(min > 0.0, "min pairwise distance {min}");
    }

    #[test]
    fn patch_rows_are_distinct() {
        let cfg = EncodingConfig::with_width(16);
        let n = 4096;
        let rows = patch_positions(n, &cfg);
        assert_eq!(&rows[..16], sinusoidal_pe(0.0, &cfg).as_slice());
        let mut min = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                min = min.min(l2(&rows[i * 16..(i + 1) * 16], &rows[j * 16..(j + 1) * 16]));
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn validation() {
        assert!(EncodingConfig::with_width(6).validate().is_ok());
        assert!(EncodingConfig::with_width(5).validate().is_err());
        assert!(EncodingConfig::with_width(2).validate().is_err());
        let cfg = EncodingConfig { base: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
