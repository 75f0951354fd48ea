use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};

use super::select::{select_monthly, Thresholds};
use super::source::{AcquisitionDate, ImagerySource};
use super::ChipGeometry;
use crate::cube::{Band, TimeSeriesCube};
use crate::error::{Error, Result};
use crate::store;
use crate::timestamp::Timestamp;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Selection outcome for one chip-month.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonthEntry {
    pub date: Option<AcquisitionDate>,
    pub valid_fraction: Option<f64>,
    pub threshold: Option<f64>,
    /// Frame index in the chip cube; `None` for skipped months.
    pub frame: Option<usize>,
    pub fallback: bool,
    /// The source listed no acquisition, or the chosen one had no valid pixel.
    pub missing: bool,
    pub no_valid_pixels: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipEntry {
    pub geometry: ChipGeometry,
    /// Cube store path relative to the dataset root.
    pub cube: Option<String>,
    pub frames: usize,
    pub error: Option<String>,
    pub months: BTreeMap<Timestamp, MonthEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub start: Timestamp,
    pub end: Timestamp,
    pub thresholds: Thresholds,
    pub bands: Vec<Band>,
    pub chips: BTreeMap<String, ChipEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildReport {
    pub manifest: Manifest,
    pub root: PathBuf,
    /// Chips whose cube was written.
    pub written: usize,
    /// `(chip id, error)` for chips that failed.
    pub failed: Vec<(String, String)>,
}

/// Builds one cube per chip from the source, one selected acquisition per
/// month over `start..=end`. Masked pixels become NaN. Months without a usable
/// acquisition are skipped in the cube and marked missing in the manifest.
/// A failing chip is logged and recorded without stopping the others.
pub fn build_dataset<S: ImagerySource + ?Sized>(
    source: &S,
    chips: &[ChipGeometry],
    start: Timestamp,
    end: Timestamp,
    thresholds: &Thresholds,
    out: impl AsRef<Path>,
) -> Result<BuildReport> {
    thresholds.validate()?;
    if end < start {
        return Err(Error::Config(format!("period end {end} before start {start}")));
    }
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let months = Timestamp::range_inclusive(start, end);
    let mut manifest = Manifest {
        start,
        end,
        thresholds: *thresholds,
        bands: source.bands().to_vec(),
        chips: BTreeMap::new(),
    };
    let mut written = 0;
    let mut failed = Vec::new();
    for chip in chips {
        let id = chip.id();
        let rel = format!("chips/{id}/cube");
        let entry = match build_chip(source, chip, &months, thresholds, &out.join(&rel)) {
            Ok((months, frames)) => {
                written += 1;
                ChipEntry { geometry: *chip, cube: Some(rel), frames, error: None, months }
            }
            Err(e) => {
                log::warn!("chip {id}: {e}");
                failed.push((id.clone(), e.to_string()));
                ChipEntry { geometry: *chip, cube: None, frames: 0, error: Some(e.to_string()), months: BTreeMap::new() }
            }
        };
        manifest.chips.insert(id, entry);
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(BuildReport { manifest, root: out.to_path_buf(), written, failed })
}

fn build_chip<S: ImagerySource + ?Sized>(
    source: &S,
    chip: &ChipGeometry,
    months: &[Timestamp],
    thresholds: &Thresholds,
    dest: &Path,
) -> Result<(BTreeMap<Timestamp, MonthEntry>, usize)> {
    let c = source.bands().len();
    let n = chip.size;
    let mut entries = BTreeMap::new();
    let mut frames = Vec::new();
    let mut stamps = Vec::new();
    for &month in months {
        let records = source.list(chip, month)?;
        let mut entry = MonthEntry::default();
        match select_monthly(&records, thresholds)? {
            None => entry.missing = true,
            Some(choice) => {
                let rec = records[choice.index];
                entry.date = Some(rec.date);
                entry.valid_fraction = Some(rec.valid_fraction);
                entry.threshold = Some(choice.threshold);
                entry.fallback = choice.fallback;
                let scene = source.fetch(chip, &rec)?;
                if scene.image.dim() != (c, n, n) || scene.valid.dim() != (n, n) {
                    return Err(Error::Precondition(format!(
                        "scene {} has shape {:?}, expected {:?}",
                        rec.date,
                        scene.image.dim(),
                        (c, n, n)
                    )));
                }
                if !scene.valid.iter().any(|&v| v) {
                    entry.no_valid_pixels = true;
                    entry.missing = true;
                } else {
                    let mut img = scene.image;
                    for ((_, y, x), v) in img.indexed_iter_mut() {
                        if !scene.valid[[y, x]] {
                            *v = f32::NAN;
                        }
                    }
                    entry.frame = Some(frames.len());
                    frames.push(img);
                    stamps.push(month);
                }
            }
        }
        entries.insert(month, entry);
    }
    if frames.is_empty() {
        return Err(Error::Precondition("no month has a usable acquisition".into()));
    }
    let mut data = Array4::zeros((frames.len(), c, n, n));
    for (t, f) in frames.iter().enumerate() {
        data.slice_mut(s![t, .., .., ..]).assign(f);
    }
    let count = frames.len();
    let cube = TimeSeriesCube::new(data, stamps, source.bands().to_vec())?;
    store::write_cube(&cube, dest)?;
    Ok((entries, count))
}

pub fn read_manifest(root: impl AsRef<Path>) -> Result<Manifest> {
    let path = root.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}
