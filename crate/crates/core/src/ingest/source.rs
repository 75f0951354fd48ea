use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ChipGeometry;
use crate::cube::Band;
use crate::error::{Error, Result};
use crate::timestamp::Timestamp;

/// Calendar date of an acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AcquisitionDate {
    pub month: Timestamp,
    pub day: u32,
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        2 if (year % 4 == 0 && year % 100 != 0) || year % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

impl AcquisitionDate {
    pub fn new(year: i32, month: u32, day: u32) -> Result<Self> {
        let ts = Timestamp::new(year, month)?;
        if day == 0 || day > days_in_month(year, month) {
            return Err(Error::Config(format!("invalid day {day} for {ts}")));
        }
        Ok(AcquisitionDate { month: ts, day })
    }
}

impl fmt::Display for AcquisitionDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:02}", self.month, self.day)
    }
}

impl FromStr for AcquisitionDate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid date `{s}`, expected YYYY-MM-DD"));
        let mut parts = s.split('-');
        let (Some(y), Some(m), Some(d), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        if y.len() != 4 || m.len() != 2 || d.len() != 2 {
            return Err(bad());
        }
        AcquisitionDate::new(
            y.parse().map_err(|_| bad())?,
            m.parse().map_err(|_| bad())?,
            d.parse().map_err(|_| bad())?,
        )
    }
}

impl Serialize for AcquisitionDate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AcquisitionDate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Candidate scene for a chip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionRecord {
    pub date: AcquisitionDate,
    /// Fraction of pixels that are neither cloud nor nodata.
    pub valid_fraction: f64,
}

/// A fetched `C×H×W` reflectance image and its validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub image: Array3<f32>,
    pub valid: Array2<bool>,
}

/// A catalog of scenes per chip.
pub trait ImagerySource {
    fn bands(&self) -> &[Band];

    /// Records whose date falls in `month`, in date order.
    fn list(&self, chip: &ChipGeometry, month: Timestamp) -> Result<Vec<AcquisitionRecord>>;

    fn fetch(&self, chip: &ChipGeometry, record: &AcquisitionRecord) -> Result<Scene>;
}

/// `source.json` of a filesystem source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceInfo {
    pub bands: Vec<Band>,
    /// Digital number per unit reflectance.
    pub scale: f64,
}

/// Scenes on disk:
///
/// ```text
/// <root>/source.json                          bands and DN scale
/// <root>/chips/<chip id>/<YYYY-MM-DD>.bin     u16 LE digital numbers, C×H×W
/// <root>/chips/<chip id>/<YYYY-MM-DD>.mask    u8 per pixel, 1 = valid
/// ```
#[derive(Clone, Debug)]
pub struct FsSource {
    root: PathBuf,
    info: SourceInfo,
}

impl FsSource {
    pub const INFO_FILE: &'static str = "source.json";

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let p = root.join(Self::INFO_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::format(&p, format!("cannot read: {e}")))?;
        let info: SourceInfo = serde_json::from_str(&text).map_err(|e| Error::format(&p, e.to_string()))?;
        if info.bands.is_empty() || !(info.scale > 0.0) {
            return Err(Error::format(&p, "need at least one band and a positive scale"));
        }
        Ok(FsSource { root, info })
    }

    /// Creates an empty source directory.
    pub fn create(root: impl AsRef<Path>, info: SourceInfo) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("chips")).map_err(|e| Error::io(&root, e))?;
        let p = root.join(Self::INFO_FILE);
        fs::write(&p, serde_json::to_string_pretty(&info)? + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(FsSource { root, info })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn chip_dir(&self, chip: &ChipGeometry) -> PathBuf {
        self.root.join("chips").join(chip.id())
    }

    /// Stores one scene; reflectance is quantized to `round(v·scale)` digital numbers.
    pub fn write_scene(&self, chip: &ChipGeometry, date: AcquisitionDate, scene: &Scene) -> Result<()> {
        let (c, h, w) = scene.image.dim();
        if c != self.info.bands.len() || (h, w) != (chip.size, chip.size) || scene.valid.dim() != (h, w) {
            return Err(Error::Precondition(format!(
                "scene {:?} does not fit chip {chip} with {} bands",
                scene.image.dim(),
                self.info.bands.len()
            )));
        }
        let dir = self.chip_dir(chip);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut bin = Vec::with_capacity(c * h * w * 2);
        for &v in scene.image.iter() {
            let dn = (v as f64 * self.info.scale).round().clamp(0.0, u16::MAX as f64) as u16;
            bin.extend_from_slice(&dn.to_le_bytes());
        }
        let p = dir.join(format!("{date}.bin"));
        fs::write(&p, bin).map_err(|e| Error::io(&p, e))?;
        let mask: Vec<u8> = scene.valid.iter().map(|&v| v as u8).collect();
        let p = dir.join(format!("{date}.mask"));
        fs::write(&p, mask).map_err(|e| Error::io(&p, e))
    }

    fn read_mask(&self, chip: &ChipGeometry, date: AcquisitionDate) -> Result<Array2<bool>> {
        let p = self.chip_dir(chip).join(format!("{date}.mask"));
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let n = chip.size * chip.size;
        if bytes.len() != n {
            return Err(Error::integrity(&p, format!("{} bytes, expected {n}", bytes.len())));
        }
        let valid = bytes.iter().map(|&b| b != 0).collect();
        Ok(Array2::from_shape_vec((chip.size, chip.size), valid).expect("mask shape"))
    }
}

impl ImagerySource for FsSource {
    fn bands(&self) -> &[Band] {
        &self.info.bands
    }

    fn list(&self, chip: &ChipGeometry, month: Timestamp) -> Result<Vec<AcquisitionRecord>> {
        let dir = self.chip_dir(chip);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&dir, e)),
        };
        let mut dates = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".bin")) else {
                continue;
            };
            let date: AcquisitionDate = stem
                .parse()
                .map_err(|_| Error::format(entry.path(), "scene file name is not YYYY-MM-DD.bin"))?;
            if date.month == month {
                dates.push(date);
            }
        }
        dates.sort();
        dates
            .into_iter()
            .map(|date| {
                let m = self.read_mask(chip, date)?;
                let valid_fraction = m.iter().filter(|&&v| v).count() as f64 / m.len() as f64;
                Ok(AcquisitionRecord { date, valid_fraction })
            })
            .collect()
    }

    fn fetch(&self, chip: &ChipGeometry, record: &AcquisitionRecord) -> Result<Scene> {
        let p = self.chip_dir(chip).join(format!("{}.bin", record.date));
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        let c = self.info.bands.len();
        let n = c * chip.size * chip.size;
        if bytes.len() != n * 2 {
            return Err(Error::integrity(&p, format!("{} bytes, expected {}", bytes.len(), n * 2)));
        }
        let inv = 1.0 / self.info.scale;
        let vals = bytes
            .chunks_exact(2)
            .map(|b| (u16::from_le_bytes([b[0], b[1]]) as f64 * inv) as f32)
            .collect();
        let image = Array3::from_shape_vec((c, chip.size, chip.size), vals).expect("scene shape");
        Ok(Scene { image, valid: self.read_mask(chip, record.date)? })
    }
}
