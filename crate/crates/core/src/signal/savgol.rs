use nalgebra::DMatrix;
use ndarray::Array2;

use super::RegularSeries;
use crate::error::{Error, Result};

pub const SAVGOL_WINDOW: usize = 7;
pub const SAVGOL_POLYORDER: usize = 4;

/// Least-squares smoothing matrix for one window: row `r` maps the `window`
/// samples to the fitted polynomial evaluated at window position `r`.
///
/// Row `window / 2` holds the classic central coefficients; the other rows
/// serve the edges.
pub fn savgol_coefficients(window: usize, polyorder: usize) -> Result<Array2<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Precondition(format!("window {window} must be odd")));
    }
    if polyorder >= window {
        return Err(Error::Precondition(format!(
            "polyorder {polyorder} must be below window {window}"
        )));
    }
    let half = (window / 2) as f64;
    // centred abscissae keep the Vandermonde matrix well conditioned
    let vander = DMatrix::from_fn(window, polyorder + 1, |i, j| (i as f64 - half).powi(j as i32));
    let q = vander.qr().q();
    let hat = &q * q.transpose();
    Ok(Array2::from_shape_fn((window, window), |(r, c)| hat[(r, c)]))
}

/// Savitzky-Golay smoothing along time for every pixel column.
///
/// The first and last `window / 2` outputs evaluate the polynomial fitted to
/// the first and last full window, so polynomials of degree `<= polyorder` pass
/// through unchanged everywhere.
pub fn savgol_smooth(series: &RegularSeries, window: usize, polyorder: usize) -> Result<RegularSeries> {
    let hat = savgol_coefficients(window, polyorder)?;
    let t = series.len();
    if t < window {
        return Err(Error::Precondition(format!(
            "series has {t} months but the smoothing window is {window}; \
             extend the period or reduce the window"
        )));
    }
    let half = window / 2;
    let x = &series.values;
    let mut out = Array2::zeros(x.dim());
    for i in 0..t {
        let (start, row) = if i < half {
            (0, i)
        } else if i >= t - half {
            (t - window, i - (t - window))
        } else {
            (i - half, half)
        };
        let coefs = hat.row(row);
        let mut acc = out.row_mut(i);
        for (j, &c) in coefs.iter().enumerate() {
            acc.scaled_add(c, &x.row(start + j));
        }
    }
    Ok(RegularSeries {
        values: out,
        start: series.start,
        invalid: series.invalid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestamp::Timestamp;
    use proptest::prelude::*;

    fn series(v: &[f64]) -> RegularSeries {
        RegularSeries::new(
            Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap(),
            Timestamp::new(2018, 1).unwrap(),
        )
    }

    #[test]
    fn central_row_matches_tabulated_quadratic_coefficients() {
        // window 5, order 2: (-3, 12, 17, 12, -3) / 35
        let hat = savgol_coefficients(5, 2).unwrap();
        let want = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in hat.row(2).iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn quartic_is_reproduced_at_every_index() {
        for len in 7..=12 {
            let v: Vec<f64> = (0..len)
                .map(|t| {
                    let t = t as f64;
                    t.powi(4) - 3.0 * t * t + 2.0
                })
                .collect();
            let out = savgol_smooth(&series(&v), 7, 4).unwrap();
            for (a, b) in out.values.column(0).iter().zip(&v) {
                assert!((a - b).abs() <= 1e-9, "len {len}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_is_unchanged() {
        let out = savgol_smooth(&series(&[0.42; 20]), 7, 4).unwrap();
        assert!(out.values.iter().all(|v| (v - 0.42).abs() < 1e-12));
    }

    #[test]
    fn short_series_is_rejected() {
        let err = savgol_smooth(&series(&[0.0; 6]), 7, 4).unwrap_err();
        assert!(err.to_string().contains("window"));
    }

    #[test]
    fn invalid_parameters() {
        assert!(savgol_coefficients(6, 2).is_err());
        assert!(savgol_coefficients(5, 5).is_err());
    }

    proptest! {
        #[test]
        fn reproduces_low_degree_polynomials(
            coefs in proptest::collection::vec(-1.0f64..1.0, 5),
            degree in 0usize..5,
            len in 7usize..40,
        ) {
            let scale = (len - 1) as f64;
            let v: Vec<f64> = (0..len).map(|t| {
                let s = t as f64 / scale;
                coefs[..=degree].iter().rev().fold(0.0, |acc, c| acc * s + c)
            }).collect();
            let out = savgol_smooth(&series(&v), 7, 4).unwrap();
            for (a, b) in out.values.column(0).iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
