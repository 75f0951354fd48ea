use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::timestamp::{months_between, Timestamp};

/// Values on a regular monthly grid, `T_reg×P` (time-major, one column per pixel).
#[derive(Clone, Debug, PartialEq)]
pub struct RegularSeries {
    pub values: Array2<f64>,
    /// Timestamp of grid row 0.
    pub start: Timestamp,
    /// Pixels that had fewer than two valid observations; their column is NaN.
    pub invalid: Vec<bool>,
}

impl RegularSeries {
    /// Wrap already-regular values (every pixel valid unless it holds NaN).
    pub fn new(values: Array2<f64>, start: Timestamp) -> Self {
        let invalid = values
            .columns()
            .into_iter()
            .map(|c| c.iter().any(|v| v.is_nan()))
            .collect();
        RegularSeries { values, start, invalid }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }
}

/// Resample irregular per-pixel series onto every month between the first and
/// last timestamp, by piecewise-linear interpolation. Grid points outside a
/// pixel's observed range are extrapolated along the nearest segment.
///
/// NaN observations are dropped per pixel; a pixel left with fewer than two
/// observations becomes NaN throughout and is marked invalid.
pub fn regularize_monthly(values: ArrayView2<'_, f64>, timestamps: &[Timestamp]) -> Result<RegularSeries> {
    let (t, p) = values.dim();
    if timestamps.len() != t {
        return Err(Error::Precondition(format!(
            "{} timestamps for {t} observations",
            timestamps.len()
        )));
    }
    if t < 2 {
        return Err(Error::Precondition(
            "monthly regularization needs at least 2 timestamps".into(),
        ));
    }
    let first = *timestamps.iter().min().expect("nonempty");
    let months: Vec<i64> = timestamps.iter().map(|&ts| months_between(first, ts)).collect();
    for w in months.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Precondition("timestamps must be strictly increasing".into()));
        }
    }
    let t_reg = (months[t - 1] - months[0] + 1) as usize;

    let mut out = Array2::from_elem((t_reg, p), f64::NAN);
    let mut invalid = vec![false; p];
    let mut xs = Vec::with_capacity(t);
    let mut ys = Vec::with_capacity(t);
    for pix in 0..p {
        xs.clear();
        ys.clear();
        for (ti, &m) in months.iter().enumerate() {
            let v = values[[ti, pix]];
            if !v.is_nan() {
                xs.push(m as f64);
                ys.push(v);
            }
        }
        if xs.len() < 2 {
            invalid[pix] = true;
            continue;
        }
        for g in 0..t_reg {
            out[[g, pix]] = interp_extrapolate(&xs, &ys, g as f64);
        }
    }
    if invalid.iter().any(|&b| b) {
        log::warn!(
            "{} pixels have fewer than 2 valid observations",
            invalid.iter().filter(|&&b| b).count()
        );
    }
    Ok(RegularSeries { values: out, start: first, invalid })
}

/// Linear interpolation with linear extrapolation; `xs` strictly increasing, len >= 2.
fn interp_extrapolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = xs.partition_point(|&v| v < x);
    if k < n && xs[k] == x {
        return ys[k];
    }
    let seg = k.clamp(1, n - 1);
    let (x0, x1, y0, y1) = (xs[seg - 1], xs[seg], ys[seg - 1], ys[seg]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn months(ms: &[i64]) -> Vec<Timestamp> {
        let start = Timestamp::new(2018, 1).unwrap();
        ms.iter().map(|&m| start.add_months(m).unwrap()).collect()
    }

    fn column(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn linear_midpoint() {
        let r = regularize_monthly(column(&[0.0, 1.0]).view(), &months(&[0, 2])).unwrap();
        assert_eq!(r.values.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn extrapolates_with_edge_slope() {
        // observed at 0, 2 and 3; month 3 must continue the 0..2 slope for a
        // pixel whose month-3 observation is missing
        let vals = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, f64::NAN]).unwrap();
        let r = regularize_monthly(vals.view(), &months(&[0, 2, 3])).unwrap();
        assert_eq!(r.values.nrows(), 4);
        assert!((r.values[[3, 0]] - 1.5).abs() < 1e-12);
        assert!(!r.invalid[0]);
    }

    #[test]
    fn identity_on_full_grid() {
        let v = [0.3, -0.2, 0.7, 0.11, 0.9];
        let r = regularize_monthly(column(&v).view(), &months(&[0, 1, 2, 3, 4])).unwrap();
        assert_eq!(r.values.column(0).to_vec(), v.to_vec());
    }

    #[test]
    fn single_observation_pixel_is_invalid() {
        let vals = Array2::from_shape_vec((3, 2), vec![0.1, f64::NAN, 0.2, f64::NAN, 0.3, 0.5]).unwrap();
        let r = regularize_monthly(vals.view(), &months(&[0, 1, 2])).unwrap();
        assert!(r.invalid[1]);
        assert!(!r.invalid[0]);
        assert!(r.values.column(1).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn needs_two_timestamps() {
        assert!(regularize_monthly(column(&[0.1]).view(), &months(&[0])).is_err());
    }

    proptest! {
        #[test]
        fn exact_on_affine_signals(
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            gaps in proptest::collection::vec(1i64..4, 1..10),
            drop_first in proptest::bool::ANY,
        ) {
            let mut ms = vec![0i64];
            for g in &gaps { ms.push(ms.last().unwrap() + g); }
            let vals: Vec<f64> = ms.iter().enumerate().map(|(i, &m)| {
                if drop_first && i == 0 && ms.len() > 2 { f64::NAN } else { a * m as f64 + b }
            }).collect();
            let r = regularize_monthly(column(&vals).view(), &months(&ms)).unwrap();
            for g in 0..r.len() {
                prop_assert!((r.values[[g, 0]] - (a * g as f64 + b)).abs() <= 1e-9);
            }
        }
    }
}
