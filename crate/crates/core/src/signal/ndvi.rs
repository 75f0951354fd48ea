use ndarray::{Array3, Axis, Zip};

use crate::cube::{Band, TimeSeriesCube};
use crate::error::{Error, Result};

pub const NDVI_EPS: f64 = 1e-8;

/// `(nir − red) / (nir + red + ε)` per frame and pixel. NaN propagates.
pub fn ndvi(cube: &TimeSeriesCube) -> Result<Array3<f64>> {
    let red = cube
        .band_index(Band::Red)
        .ok_or_else(|| Error::Config("NDVI needs a red band".into()))?;
    let nir = cube
        .band_index(Band::Nir)
        .ok_or_else(|| Error::Config("NDVI needs a nir band".into()))?;
    let data = cube.data();
    let red = data.index_axis(Axis(1), red);
    let nir = data.index_axis(Axis(1), nir);
    let mut out = Array3::zeros(red.dim());
    Zip::from(&mut out).and(&red).and(&nir).for_each(|o, &r, &n| {
        let (r, n) = (r as f64, n as f64);
        *o = (n - r) / (n + r + NDVI_EPS);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timestamp::Timestamp;
    use ndarray::Array4;

    fn one_pixel(red: f32, nir: f32) -> TimeSeriesCube {
        let mut data = Array4::zeros((1, 4, 1, 1));
        data[[0, 0, 0, 0]] = red;
        data[[0, 3, 0, 0]] = nir;
        TimeSeriesCube::new(data, vec![Timestamp::new(2018, 1).unwrap()], Band::CANONICAL.to_vec())
            .unwrap()
    }

    #[test]
    fn direct_formula() {
        let v = ndvi(&one_pixel(0.1, 0.5)).unwrap()[[0, 0, 0]];
        assert!((v - 0.4 / 0.6).abs() < 1e-7);
    }

    #[test]
    fn equal_bands_give_zero() {
        assert!(ndvi(&one_pixel(0.3, 0.3)).unwrap()[[0, 0, 0]].abs() < 1e-7);
    }

    #[test]
    fn dark_pixel_is_zero_not_nan() {
        assert_eq!(ndvi(&one_pixel(0.0, 0.0)).unwrap()[[0, 0, 0]], 0.0);
    }

    #[test]
    fn nan_propagates() {
        let mut data = Array4::zeros((1, 4, 1, 2));
        data[[0, 0, 0, 0]] = f32::NAN;
        let stamps = vec![Timestamp::new(2018, 1).unwrap()];
        let cube = TimeSeriesCube::new(data, stamps, Band::CANONICAL.to_vec()).unwrap();
        let v = ndvi(&cube).unwrap();
        assert!(v[[0, 0, 0]].is_nan());
        assert!(!v[[0, 0, 1]].is_nan());
    }

    #[test]
    fn missing_band_is_config_error() {
        let data = Array4::zeros((1, 2, 1, 1));
        let stamps = vec![Timestamp::new(2018, 1).unwrap()];
        let cube = TimeSeriesCube::new(data, stamps, vec![Band::Red, Band::Green]).unwrap();
        assert!(matches!(ndvi(&cube), Err(Error::Config(_))));
    }
}
