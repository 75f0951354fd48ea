//! Per-pixel dominant temporal-frequency maps.
//!
//! The pipeline is `ndvi → regularize_monthly → savgol_smooth →
//! dominant_frequencies`, composed by [`construct_frequency_map`].

mod ndvi;
mod regularize;
mod savgol;
mod spectrum;

pub use ndvi::{ndvi, NDVI_EPS};
pub use regularize::{regularize_monthly, RegularSeries};
pub use savgol::{savgol_coefficients, savgol_smooth, SAVGOL_POLYORDER, SAVGOL_WINDOW};
pub use spectrum::{candidate_bins, dominant_frequencies, DominantFrequencies};

use ndarray::Array3;

use crate::cube::{FrequencyMap, TimeSeriesCube};
use crate::error::{Error, Result};

/// Default number of ranked frequencies per pixel.
pub const DEFAULT_K: usize = 3;

/// Per-pixel diagnostics gathered while building a map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyReport {
    /// Pixels with fewer than two valid NDVI observations (all channels NaN).
    pub invalid_pixels: usize,
    /// Pixels whose ranking was padded or that have no nonzero positive-frequency amplitude.
    pub flagged_pixels: usize,
}

/// Build the `K×H×W` dominant-frequency map of a cube.
pub fn construct_frequency_map(
    cube: &TimeSeriesCube,
    k: usize,
) -> Result<(FrequencyMap, FrequencyReport)> {
    let (t, _, h, w) = cube.dims();
    if t < 2 {
        return Err(Error::Precondition(format!(
            "frequency map needs at least 2 frames, cube has {t}"
        )));
    }
    let index = ndvi(cube)?;
    let flat = index
        .into_shape_with_order((t, h * w))
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let regular = regularize_monthly(flat.view(), cube.timestamps())?;
    let smooth = savgol_smooth(&regular, SAVGOL_WINDOW, SAVGOL_POLYORDER)?;
    let dom = dominant_frequencies(&smooth, k)?;

    let report = FrequencyReport {
        invalid_pixels: regular.invalid.iter().filter(|&&b| b).count(),
        flagged_pixels: dom.flagged.iter().filter(|&&b| b).count(),
    };
    if report.flagged_pixels > 0 {
        log::warn!(
            "{} of {} pixels have degenerate or padded frequency rankings",
            report.flagged_pixels,
            h * w
        );
    }
    let data = Array3::from_shape_fn((k, h, w), |(c, y, x)| dom.freqs[[c, y * w + x]] as f32);
    Ok((FrequencyMap::new(data)?, report))
}
