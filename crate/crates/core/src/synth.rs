//! Seeded synthetic agricultural time series with known parcels and phenology.
//!
//! Each pixel belongs to one parcel. A parcel follows
//! `NDVI(t) = 0.45 + 0.35·sin(2π(t + phase)/period)` (plus optional noise), and
//! red/nir are solved from NDVI with `red + nir = 0.5`, so the mapping back to
//! NDVI is exact.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cube::{Band, TimeSeriesCube};
use crate::error::{Error, Result};
use crate::store;
use crate::timestamp::Timestamp;

pub const NDVI_OFFSET: f64 = 0.45;
pub const NDVI_AMPLITUDE: f64 = 0.35;
/// `red + nir` at every pixel and month.
pub const RED_NIR_SUM: f64 = 0.5;
pub const PERIOD_CHOICES: [u32; 3] = [4, 6, 12];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub months: usize,
    pub parcels: usize,
    /// Per-parcel NDVI period in months; drawn from {4, 6, 12} when empty.
    #[serde(default)]
    pub periods: Vec<u32>,
    /// Per-parcel phase offset in months; drawn uniformly in `[0, period)` when empty.
    #[serde(default)]
    pub phases: Vec<f64>,
    /// Standard deviation of additive Gaussian noise on the NDVI path.
    #[serde(default)]
    pub noise_sigma: f64,
    pub seed: u64,
    pub start: Timestamp,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            height: 64,
            width: 64,
            months: 36,
            parcels: 2,
            periods: vec![6, 12],
            phases: vec![0.0, 0.0],
            noise_sigma: 0.0,
            seed: 0,
            start: Timestamp::new(2018, 1).expect("valid"),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.parcels == 0 {
            return Err(Error::Config("at least one parcel required".into()));
        }
        if self.height == 0 || self.width == 0 || self.months == 0 {
            return Err(Error::Config("synthetic dimensions must be positive".into()));
        }
        if self.parcels > self.height * self.width || self.parcels > u16::MAX as usize {
            return Err(Error::Config(format!("too many parcels: {}", self.parcels)));
        }
        for (name, len) in [("periods", self.periods.len()), ("phases", self.phases.len())] {
            if len != 0 && len != self.parcels {
                return Err(Error::Config(format!(
                    "{name} lists {len} values for {} parcels",
                    self.parcels
                )));
            }
        }
        if self.periods.contains(&0) {
            return Err(Error::Config("periods must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be nonnegative".into()));
        }
        self.start.add_months(self.months as i64 - 1)?;
        Ok(())
    }

    /// `(period, phase)` per parcel with defaults drawn from the seed.
    fn phenology(&self) -> (Vec<u32>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_9a7e);
        let periods = if self.periods.is_empty() {
            (0..self.parcels)
                .map(|_| PERIOD_CHOICES[rng.random_range(0..PERIOD_CHOICES.len())])
                .collect()
        } else {
            self.periods.clone()
        };
        let phases = if self.phases.is_empty() {
            periods.iter().map(|&p| rng.random_range(0.0..p as f64)).collect()
        } else {
            self.phases.clone()
        };
        (periods, phases)
    }
}

/// Output of [`gen_sits`].
#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub cube: TimeSeriesCube,
    /// `H×W` parcel id per pixel.
    pub parcels: Array2<u16>,
    pub periods: Vec<u32>,
    pub phases: Vec<f64>,
    /// Noise-free NDVI, `T×H×W`.
    pub clean_ndvi: ndarray::Array3<f64>,
}

/// Seeded Voronoi partition into `parcels` regions.
pub fn gen_parcels(spec: &SynthSpec) -> Result<Array2<u16>> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sites: Vec<(usize, usize)> = Vec::with_capacity(spec.parcels);
    while sites.len() < spec.parcels {
        let s = (rng.random_range(0..h), rng.random_range(0..w));
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        let mut best = (usize::MAX, 0u16);
        for (i, &(sy, sx)) in sites.iter().enumerate() {
            let d = y.abs_diff(sy).pow(2) + x.abs_diff(sx).pow(2);
            if d < best.0 {
                best = (d, i as u16);
            }
        }
        best.1
    }))
}

/// Clean parcel NDVI at month index `t`.
pub fn parcel_ndvi(period: u32, phase: f64, t: f64) -> f64 {
    NDVI_OFFSET + NDVI_AMPLITUDE * (2.0 * PI * (t + phase) / period as f64).sin()
}

/// `(red, nir)` realizing `ndvi` with `red + nir = 0.5`.
pub fn bands_from_ndvi(ndvi: f64) -> (f64, f64) {
    let red = 0.5 * RED_NIR_SUM * (1.0 - ndvi);
    let nir = 0.5 * RED_NIR_SUM * (1.0 + ndvi);
    (red, nir)
}

pub fn gen_sits(spec: &SynthSpec) -> Result<SynthOutput> {
    let parcels = gen_parcels(spec)?;
    let (periods, phases) = spec.phenology();
    let (t_len, h, w) = (spec.months, spec.height, spec.width);

    // per-parcel soil brightness shifts green/blue slightly
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e37_79b9));
    let soil: Vec<f64> = (0..spec.parcels).map(|_| rng.random_range(-0.02..0.02)).collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut data = Array4::<f32>::zeros((t_len, 4, h, w));
    let mut clean = ndarray::Array3::<f64>::zeros((t_len, h, w));
    for t in 0..t_len {
        for y in 0..h {
            for x in 0..w {
                let p = parcels[[y, x]] as usize;
                let base = parcel_ndvi(periods[p], phases[p], t as f64);
                clean[[t, y, x]] = base;
                let v = if spec.noise_sigma > 0.0 {
                    (base + noise.sample(&mut rng)).clamp(-1.0, 1.0)
                } else {
                    base
                };
                let (red, nir) = bands_from_ndvi(v);
                let green = 0.08 + 0.03 * v + soil[p];
                let blue = 0.05 + 0.015 * v + 0.5 * soil[p];
                data[[t, 0, y, x]] = red as f32;
                data[[t, 1, y, x]] = green as f32;
                data[[t, 2, y, x]] = blue as f32;
                data[[t, 3, y, x]] = nir as f32;
            }
        }
    }
    let stamps = (0..t_len)
        .map(|i| spec.start.add_months(i as i64))
        .collect::<Result<Vec<_>>>()?;
    let cube = TimeSeriesCube::new(data, stamps, Band::CANONICAL.to_vec())?;
    Ok(SynthOutput {
        cube,
        parcels,
        periods,
        phases,
        clean_ndvi: clean,
    })
}

/// Cloud rectangles per frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudModel {
    pub min_clouds: usize,
    pub max_clouds: usize,
    /// Rectangle side range as a fraction of the frame side.
    pub min_extent: f64,
    pub max_extent: f64,
}

impl CloudModel {
    pub fn clear() -> Self {
        CloudModel {
            min_clouds: 0,
            max_clouds: 0,
            min_extent: 0.0,
            max_extent: 0.0,
        }
    }

    pub fn overcast() -> Self {
        CloudModel {
            min_clouds: 1,
            max_clouds: 1,
            min_extent: 1.0,
            max_extent: 1.0,
        }
    }
}

impl Default for CloudModel {
    fn default() -> Self {
        CloudModel {
            min_clouds: 0,
            max_clouds: 3,
            min_extent: 0.1,
            max_extent: 0.6,
        }
    }
}

/// A per-frame validity mask (`true` = clear) and its valid fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudMask {
    pub valid: Array2<bool>,
    pub valid_fraction: f64,
}

impl CloudMask {
    pub fn from_valid(valid: Array2<bool>) -> Self {
        let n = valid.len().max(1);
        let valid_fraction = valid.iter().filter(|&&v| v).count() as f64 / n as f64;
        CloudMask { valid, valid_fraction }
    }
}

/// Random rectangular clouds for `frames` frames of `height×width`.
pub fn gen_cloud_masks(
    height: usize,
    width: usize,
    frames: usize,
    model: &CloudModel,
    seed: u64,
) -> Result<Vec<CloudMask>> {
    if model.min_clouds > model.max_clouds || !(model.min_extent <= model.max_extent) {
        return Err(Error::Config("invalid cloud model ranges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = |frac: f64, n: usize| ((frac.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n);
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut valid = Array2::from_elem((height, width), true);
        let count = rng.random_range(model.min_clouds..=model.max_clouds);
        for _ in 0..count {
            let ext = if model.max_extent > model.min_extent {
                rng.random_range(model.min_extent..=model.max_extent)
            } else {
                model.min_extent
            };
            let (ch, cw) = (side(ext, height), side(ext, width));
            let y0 = rng.random_range(0..=height - ch);
            let x0 = rng.random_range(0..=width - cw);
            valid
                .slice_mut(ndarray::s![y0..y0 + ch, x0..x0 + cw])
                .fill(false);
        }
        out.push(CloudMask::from_valid(valid));
    }
    Ok(out)
}

/// A crop calendar: NDVI period and phase in months.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropType {
    pub period: u32,
    pub phase: f64,
}

/// Parcel-classification benchmark for frozen-encoder probes. Every parcel
/// follows one of a few fixed crop calendars; a pixel is positive when its
/// parcel has the `positive` calendar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSetSpec {
    pub months: usize,
    pub parcels: usize,
    pub pretrain_parcels: usize,
    pub train_chips: usize,
    pub test_chips: usize,
    pub crop_types: Vec<CropType>,
    pub positive: usize,
    pub noise_sigma: f64,
    /// Frame indices handed to the probe.
    pub frames: Vec<usize>,
    pub seed: u64,
}

impl Default for ProbeSetSpec {
    fn default() -> Self {
        ProbeSetSpec {
            months: 36,
            parcels: 6,
            pretrain_parcels: 8,
            train_chips: 6,
            test_chips: 3,
            // at month 0 the three calendars sit low, mid and high
            crop_types: vec![
                CropType { period: 12, phase: 9.0 },
                CropType { period: 12, phase: 0.0 },
                CropType { period: 12, phase: 3.0 },
            ],
            positive: 1,
            noise_sigma: 0.15,
            frames: vec![0],
            seed: 0,
        }
    }
}

/// A synthetic chip with per-pixel binary labels.
#[derive(Clone, Debug)]
pub struct LabeledChip {
    pub sits: SynthOutput,
    pub labels: Array2<u8>,
}

#[derive(Clone, Debug)]
pub struct ProbeSet {
    /// Unlabeled cube of the same calendars for pretraining.
    pub pretrain: SynthOutput,
    pub train: Vec<LabeledChip>,
    pub test: Vec<LabeledChip>,
}

impl ProbeSetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.crop_types.len() < 2 || self.positive >= self.crop_types.len() {
            return Err(Error::Config("probe set needs two or more crop types and a valid positive index".into()));
        }
        if self.parcels < self.crop_types.len() || self.pretrain_parcels < self.crop_types.len() {
            return Err(Error::Config("probe set needs at least one parcel per crop type".into()));
        }
        if self.train_chips == 0 || self.test_chips == 0 || self.frames.is_empty() {
            return Err(Error::Config("probe set needs train chips, test chips and frames".into()));
        }
        if let Some(&f) = self.frames.iter().find(|&&f| f >= self.months) {
            return Err(Error::Config(format!("probe frame {f} outside {} months", self.months)));
        }
        Ok(())
    }

    fn chip(&self, size: usize, parcels: usize, seed: u64) -> Result<LabeledChip> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_c41b);
        let n = self.crop_types.len();
        // the first parcels cover every calendar once
        let types: Vec<usize> = (0..parcels)
            .map(|i| if i < n { i } else { rng.random_range(0..n) })
            .collect();
        let sits = gen_sits(&SynthSpec {
            height: size,
            width: size,
            months: self.months,
            parcels,
            periods: types.iter().map(|&t| self.crop_types[t].period).collect(),
            phases: types.iter().map(|&t| self.crop_types[t].phase).collect(),
            noise_sigma: self.noise_sigma,
            seed,
            ..Default::default()
        })?;
        let labels = sits.parcels.mapv(|p| (types[p as usize] == self.positive) as u8);
        Ok(LabeledChip { sits, labels })
    }
}

/// Square `size×size` chips.
pub fn gen_probe_set(spec: &ProbeSetSpec, size: usize) -> Result<ProbeSet> {
    spec.validate()?;
    let base = spec.seed.wrapping_mul(1000);
    let pretrain = spec.chip(size, spec.pretrain_parcels, base)?.sits;
    let chips = (0..spec.train_chips + spec.test_chips)
        .map(|i| spec.chip(size, spec.parcels, base + 1 + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut train = chips;
    let test = train.split_off(spec.train_chips);
    Ok(ProbeSet { pretrain, train, test })
}

#[derive(Serialize, Deserialize)]
struct PeriodsFile {
    parcels: usize,
    periods: Vec<u32>,
    phases: Vec<f64>,
}

/// Write `<dir>/cube` (store), `<dir>/labels.bin` (u16 LE, row-major) and
/// `<dir>/periods.json`.
pub fn write_synth(out: &SynthOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    store::write_cube(&out.cube, dir.join("cube"))?;
    let mut bytes = Vec::with_capacity(out.parcels.len() * 2);
    for &id in out.parcels.iter() {
        bytes.extend_from_slice(&id.to_le_bytes());
    }
    let labels = dir.join("labels.bin");
    fs::write(&labels, bytes).map_err(|e| Error::io(&labels, e))?;
    let periods = PeriodsFile {
        parcels: out.periods.len(),
        periods: out.periods.clone(),
        phases: out.phases.clone(),
    };
    let path = dir.join("periods.json");
    fs::write(&path, serde_json::to_vec_pretty(&periods)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Read `labels.bin` back into an `H×W` map.
pub fn read_labels(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Array2<u16>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != height * width * 2 {
        return Err(Error::integrity(path, format!("expected {} bytes", height * width * 2)));
    }
    let ids = bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    Array2::from_shape_vec((height, width), ids).map_err(|e| Error::integrity(path, e.to_string()))
}
