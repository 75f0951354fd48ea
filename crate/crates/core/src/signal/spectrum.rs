use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::RegularSeries;
use crate::error::{Error, Result};

/// Amplitudes at or below this fraction of `Σ|x|` count as exactly zero, so
/// round-off on flat series cannot reorder the tie-break.
const ZERO_AMPLITUDE_REL: f64 = 1e-10;

/// Ranked frequencies per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DominantFrequencies {
    /// `K×P` cycles/month; channel 0 has the largest amplitude.
    pub freqs: Array2<f64>,
    /// Pixels whose ranking was padded or whose strongest bin has zero amplitude.
    pub flagged: Vec<bool>,
}

/// Strictly positive DFT bins `k` of a length-`n` transform, as produced by
/// `fftfreq(n)`: `1..=(n-1)/2`. For even `n` the Nyquist bin maps to `-0.5`
/// and is not a candidate.
pub fn candidate_bins(n: usize) -> std::ops::RangeInclusive<usize> {
    1..=n.saturating_sub(1) / 2
}

/// Top-`k` positive DFT frequencies per pixel, by descending amplitude with
/// lower frequency first on ties. NaN pixels yield NaN channels.
pub fn dominant_frequencies(series: &RegularSeries, k: usize) -> Result<DominantFrequencies> {
    let n = series.len();
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let bins: Vec<usize> = candidate_bins(n).collect();
    if bins.is_empty() {
        return Err(Error::Precondition(format!(
            "a series of length {n} has no positive frequency bins"
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); n];
    let mut amps: Vec<(f64, usize)> = Vec::with_capacity(bins.len());

    let p = series.pixels();
    let mut freqs = Array2::from_elem((k, p), f64::NAN);
    let mut flagged = vec![false; p];
    for pix in 0..p {
        let col = series.values.column(pix);
        if col.iter().any(|v| !v.is_finite()) {
            continue;
        }
        for (b, &v) in buf.iter_mut().zip(col.iter()) {
            *b = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let floor = ZERO_AMPLITUDE_REL * col.iter().map(|v| v.abs()).sum::<f64>();

        amps.clear();
        amps.extend(bins.iter().map(|&b| {
            let a = buf[b].norm();
            (if a <= floor { 0.0 } else { a }, b)
        }));
        amps.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

        for c in 0..k {
            let b = amps.get(c).map_or(bins[0], |a| a.1);
            freqs[[c, pix]] = b as f64 / n as f64;
        }
        flagged[pix] = amps.len() < k || amps[0].0 == 0.0;
    }
    Ok(DominantFrequencies { freqs, flagged })
}
