use serde::{Deserialize, Serialize};

use super::source::{AcquisitionDate, FsSource, Scene, SourceInfo};
use super::ChipGeometry;
use crate::cube::Band;
use crate::error::{Error, Result};
use crate::synth::{gen_cloud_masks, gen_sits, CloudModel, SynthSpec};
use crate::timestamp::Timestamp;

/// Reflectance written under clouds.
pub const CLOUD_REFLECTANCE: f32 = 0.9;

/// A synthetic catalog: per chip a seeded parcel series, several cloudy
/// acquisitions per month and optionally months with no acquisition at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSpec {
    pub start: Timestamp,
    pub end: Timestamp,
    pub acquisitions_per_month: usize,
    pub missing_months: Vec<Timestamp>,
    pub clouds: CloudModel,
    pub parcels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for MockSpec {
    fn default() -> Self {
        MockSpec {
            start: Timestamp::new(2018, 1).expect("valid"),
            end: Timestamp::new(2021, 3).expect("valid"),
            acquisitions_per_month: 3,
            missing_months: Vec::new(),
            clouds: CloudModel::default(),
            parcels: 4,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Writes a filesystem source for `chips` under `root`.
pub fn write_mock_source(root: impl AsRef<std::path::Path>, chips: &[ChipGeometry], spec: &MockSpec) -> Result<FsSource> {
    if spec.end < spec.start {
        return Err(Error::Config("mock period ends before it starts".into()));
    }
    if !(1..=28).contains(&spec.acquisitions_per_month) {
        return Err(Error::Config("acquisitions_per_month must lie in 1..=28".into()));
    }
    let src = FsSource::create(root, SourceInfo { bands: Band::CANONICAL.to_vec(), scale: 10_000.0 })?;
    let months = Timestamp::range_inclusive(spec.start, spec.end);
    let per = spec.acquisitions_per_month;
    for (ci, chip) in chips.iter().enumerate() {
        let chip_seed = spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(ci as u64);
        let sits = gen_sits(&SynthSpec {
            height: chip.size,
            width: chip.size,
            months: months.len(),
            parcels: spec.parcels,
            periods: Vec::new(),
            phases: Vec::new(),
            noise_sigma: spec.noise_sigma,
            seed: chip_seed,
            start: spec.start,
        })?;
        let masks = gen_cloud_masks(chip.size, chip.size, months.len() * per, &spec.clouds, chip_seed ^ 0xc10d)?;
        for (t, &month) in months.iter().enumerate() {
            if spec.missing_months.contains(&month) {
                continue;
            }
            for a in 0..per {
                let date = AcquisitionDate::new(month.year(), month.month(), 1 + (a * 28 / per) as u32)?;
                let mask = &masks[t * per + a];
                let mut image = sits.cube.frame(t).to_owned();
                for ((_, y, x), v) in image.indexed_iter_mut() {
                    if !mask.valid[[y, x]] {
                        *v = CLOUD_REFLECTANCE;
                    }
                }
                src.write_scene(chip, date, &Scene { image, valid: mask.valid.clone() })?;
            }
        }
    }
    Ok(src)
}
