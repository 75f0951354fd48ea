use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timestamp::{months_between, Timestamp};

/// Spectral band of a reflectance cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Red,
    Green,
    Blue,
    Nir,
}

impl Band {
    /// Canonical storage and training order.
    pub const CANONICAL: [Band; 4] = [Band::Red, Band::Green, Band::Blue, Band::Nir];

    pub fn name(self) -> &'static str {
        match self {
            Band::Red => "red",
            Band::Green => "green",
            Band::Blue => "blue",
            Band::Nir => "nir",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(Band::Red),
            "green" => Ok(Band::Green),
            "blue" => Ok(Band::Blue),
            "nir" => Ok(Band::Nir),
            other => Err(Error::Config(format!("unknown band `{other}`"))),
        }
    }
}

/// `T×C×H×W` surface reflectance in `[0, 1]` with one timestamp per frame.
/// Missing pixels are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesCube {
    data: Array4<f32>,
    timestamps: Vec<Timestamp>,
    bands: Vec<Band>,
}

impl TimeSeriesCube {
    pub fn new(data: Array4<f32>, timestamps: Vec<Timestamp>, bands: Vec<Band>) -> Result<Self> {
        let (t, c, _, _) = data.dim();
        if t == 0 {
            return Err(Error::Config("cube has no frames".into()));
        }
        if timestamps.len() != t {
            return Err(Error::Config(format!(
                "{} timestamps for {t} frames",
                timestamps.len()
            )));
        }
        if bands.len() != c {
            return Err(Error::Config(format!("{} bands for {c} channels", bands.len())));
        }
        for w in timestamps.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Config(format!(
                    "timestamps not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].contains(b) {
                return Err(Error::Config(format!("duplicate band {b}")));
            }
        }
        for (i, frame) in data.outer_iter().enumerate() {
            if frame.iter().all(|v| v.is_nan()) {
                return Err(Error::Config(format!(
                    "frame {i} ({}) is entirely missing",
                    timestamps[i]
                )));
            }
        }
        Ok(TimeSeriesCube {
            data: data.as_standard_layout().into_owned(),
            timestamps,
            bands,
        })
    }

    pub fn data(&self) -> &Array4<f32> {
        &self.data
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// `(T, C, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame(&self, t: usize) -> ArrayView3<'_, f32> {
        self.data.index_axis(Axis(0), t)
    }

    pub fn band_index(&self, band: Band) -> Option<usize> {
        self.bands.iter().position(|&b| b == band)
    }

    /// Pretext training needs exactly the four canonical bands in canonical order.
    pub fn require_canonical_bands(&self) -> Result<()> {
        if self.bands != Band::CANONICAL {
            return Err(Error::Config(format!(
                "expected bands [red, green, blue, nir], found {:?}",
                self.bands.iter().map(|b| b.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    /// Fill NaN pixels per pixel and band by linear interpolation in time
    /// (constant extrapolation at the ends). Series with no valid value become 0.
    pub fn fill_missing_temporal(&self) -> TimeSeriesCube {
        let (t, c, h, w) = self.dims();
        let months: Vec<f64> = self
            .timestamps
            .iter()
            .map(|&ts| months_between(self.timestamps[0], ts) as f64)
            .collect();
        let mut out = self.data.clone();
        let mut xs = Vec::with_capacity(t);
        let mut ys = Vec::with_capacity(t);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    xs.clear();
                    ys.clear();
                    for ti in 0..t {
                        let v = self.data[[ti, ci, y, x]];
                        if !v.is_nan() {
                            xs.push(months[ti]);
                            ys.push(v as f64);
                        }
                    }
                    if xs.len() == t {
                        continue;
                    }
                    for ti in 0..t {
                        if !self.data[[ti, ci, y, x]].is_nan() {
                            continue;
                        }
                        out[[ti, ci, y, x]] = interp_clamped(&xs, &ys, months[ti]) as f32;
                    }
                }
            }
        }
        TimeSeriesCube {
            data: out,
            timestamps: self.timestamps.clone(),
            bands: self.bands.clone(),
        }
    }
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => ys[0],
        _ => {
            if x <= xs[0] {
                return ys[0];
            }
            if x >= xs[xs.len() - 1] {
                return ys[ys.len() - 1];
            }
            let k = xs.partition_point(|&v| v <= x);
            let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// `K×H×W` dominant temporal frequencies in cycles/month, channel 0 strongest.
/// Pixels without enough valid observations are NaN in every channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyMap {
    data: Array3<f32>,
}

impl FrequencyMap {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if data.dim().0 == 0 {
            return Err(Error::Config("frequency map needs K >= 1".into()));
        }
        if let Some(v) = data.iter().find(|v| !v.is_nan() && !(**v > 0.0 && **v <= 0.5)) {
            return Err(Error::Config(format!(
                "frequency {v} outside (0, 0.5] cycles/month"
            )));
        }
        Ok(FrequencyMap {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    /// `(K, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn k(&self) -> usize {
        self.data.dim().0
    }
}

/// An ordered frame pair drawn from one cube.
#[derive(Clone, Copy, Debug)]
pub struct BitemporalSample<'a> {
    pub x1: ArrayView3<'a, f32>,
    pub x2: ArrayView3<'a, f32>,
    pub t1: Timestamp,
    pub t2: Timestamp,
    pub gap_months: u32,
    pub freq_map: Option<&'a FrequencyMap>,
    /// Source frame indices of `x1` and `x2`.
    pub frames: (usize, usize),
}

impl<'a> BitemporalSample<'a> {
    pub fn from_cube(
        cube: &'a TimeSeriesCube,
        i: usize,
        j: usize,
        freq_map: Option<&'a FrequencyMap>,
    ) -> Result<Self> {
        let (t1, t2) = (cube.timestamps[i], cube.timestamps[j]);
        let gap = months_between(t1, t2);
        if gap < 0 {
            return Err(Error::Precondition(format!("pair ({t1}, {t2}) is not time ordered")));
        }
        Ok(BitemporalSample {
            x1: cube.frame(i),
            x2: cube.frame(j),
            t1,
            t2,
            gap_months: gap as u32,
            freq_map,
            frames: (i, j),
        })
    }

    /// The same pair presented in reverse order. The gap stays nonnegative, so
    /// `t1 <= t2` no longer holds for the swapped copy.
    pub fn swapped(&self) -> Self {
        BitemporalSample {
            x1: self.x2,
            x2: self.x1,
            t1: self.t2,
            t2: self.t1,
            gap_months: self.gap_months,
            freq_map: self.freq_map,
            frames: (self.frames.1, self.frames.0),
        }
    }
}
