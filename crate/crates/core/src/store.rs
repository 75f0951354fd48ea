//! Chunked directory store for cubes and frequency maps.
//!
//! Layout:
//!
//! ```text
//! <store>/meta.json      dims, dtype "float32", byte order, chunk shape, ...
//! <store>/t00000.bin     raw little-endian f32, one leading-axis slice per file,
//! <store>/t00001.bin     C-order over the remaining axes
//! ```
//!
//! Writes go to a sibling temp directory that is renamed into place, so a
//! reader never sees a half-written store.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::cube::{Band, FrequencyMap, TimeSeriesCube};
use crate::error::{Error, Result};
use crate::timestamp::Timestamp;

pub const META_FILE: &str = "meta.json";
const DTYPE: &str = "float32";
const BYTE_ORDER: &str = "little-endian";
const KIND_CUBE: &str = "cube";
const KIND_FREQ: &str = "frequency_map";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CubeMeta {
    kind: String,
    dims: [usize; 4],
    dtype: String,
    byte_order: String,
    bands: Vec<Band>,
    timestamps: Vec<Timestamp>,
    chunk_shape: [usize; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyMeta {
    kind: String,
    dims: [usize; 3],
    dtype: String,
    byte_order: String,
    units: String,
    k_order: String,
    chunk_shape: [usize; 3],
}

pub fn chunk_name(index: usize) -> String {
    format!("t{index:05}.bin")
}

pub fn write_cube(cube: &TimeSeriesCube, path: impl AsRef<Path>) -> Result<()> {
    let (t, c, h, w) = cube.dims();
    let meta = CubeMeta {
        kind: KIND_CUBE.into(),
        dims: [t, c, h, w],
        dtype: DTYPE.into(),
        byte_order: BYTE_ORDER.into(),
        bands: cube.bands().to_vec(),
        timestamps: cube.timestamps().to_vec(),
        chunk_shape: [1, c, h, w],
    };
    let data = cube.data();
    let chunks = (0..t).map(|i| data.index_axis(ndarray::Axis(0), i).iter().copied().collect());
    write_store(path.as_ref(), &serde_json::to_vec_pretty(&meta)?, chunks)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<TimeSeriesCube> {
    let path = path.as_ref();
    let meta: CubeMeta = read_meta(path)?;
    check_common(path, &meta.kind, KIND_CUBE, &meta.dtype, &meta.byte_order)?;
    let [t, c, h, w] = meta.dims;
    if meta.chunk_shape != [1, c, h, w] {
        return Err(Error::format(path, format!("unsupported chunk shape {:?}", meta.chunk_shape)));
    }
    if meta.timestamps.len() != t || meta.bands.len() != c {
        return Err(Error::format(path, "timestamps/bands do not match dims"));
    }
    let values = read_chunks(path, t, c * h * w)?;
    let data = Array4::from_shape_vec((t, c, h, w), values)
        .map_err(|e| Error::integrity(path, e.to_string()))?;
    TimeSeriesCube::new(data, meta.timestamps, meta.bands)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_frequency_map(map: &FrequencyMap, path: impl AsRef<Path>) -> Result<()> {
    let (k, h, w) = map.dims();
    let meta = FrequencyMeta {
        kind: KIND_FREQ.into(),
        dims: [k, h, w],
        dtype: DTYPE.into(),
        byte_order: BYTE_ORDER.into(),
        units: "cycles/month".into(),
        k_order: "descending_amplitude".into(),
        chunk_shape: [1, h, w],
    };
    let data = map.data();
    let chunks = (0..k).map(|i| data.index_axis(ndarray::Axis(0), i).iter().copied().collect());
    write_store(path.as_ref(), &serde_json::to_vec_pretty(&meta)?, chunks)
}

pub fn read_frequency_map(path: impl AsRef<Path>) -> Result<FrequencyMap> {
    let path = path.as_ref();
    let meta: FrequencyMeta = read_meta(path)?;
    check_common(path, &meta.kind, KIND_FREQ, &meta.dtype, &meta.byte_order)?;
    let [k, h, w] = meta.dims;
    if meta.chunk_shape != [1, h, w] {
        return Err(Error::format(path, format!("unsupported chunk shape {:?}", meta.chunk_shape)));
    }
    let values = read_chunks(path, k, h * w)?;
    let data = Array3::from_shape_vec((k, h, w), values)
        .map_err(|e| Error::integrity(path, e.to_string()))?;
    FrequencyMap::new(data).map_err(|e| Error::format(path, e.to_string()))
}

fn read_meta<M: for<'de> Deserialize<'de>>(path: &Path) -> Result<M> {
    let meta_path = path.join(META_FILE);
    let bytes = match fs::read(&meta_path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::format(path, "no meta.json in store"));
        }
        Err(e) => return Err(Error::io(meta_path, e)),
    };
    serde_json::from_slice(&bytes).map_err(|e| Error::format(&meta_path, e.to_string()))
}

fn check_common(path: &Path, kind: &str, want: &str, dtype: &str, order: &str) -> Result<()> {
    if kind != want {
        return Err(Error::format(path, format!("store kind `{kind}`, expected `{want}`")));
    }
    if dtype != DTYPE {
        return Err(Error::format(path, format!("unsupported dtype `{dtype}`")));
    }
    if order != BYTE_ORDER {
        return Err(Error::format(path, format!("unsupported byte order `{order}`")));
    }
    Ok(())
}

fn read_chunks(path: &Path, count: usize, per_chunk: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(count * per_chunk);
    for i in 0..count {
        let chunk_path = path.join(chunk_name(i));
        let bytes = match fs::read(&chunk_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::integrity(
                    path,
                    format!("metadata declares {count} chunks but {} is missing", chunk_name(i)),
                ));
            }
            Err(e) => return Err(Error::io(chunk_path, e)),
        };
        if bytes.len() != per_chunk * 4 {
            return Err(Error::integrity(
                path,
                format!("{} holds {} bytes, expected {}", chunk_name(i), bytes.len(), per_chunk * 4),
            ));
        }
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
    }
    let extra = path.join(chunk_name(count));
    if extra.exists() {
        return Err(Error::integrity(
            path,
            format!("metadata declares {count} chunks but {} exists", chunk_name(count)),
        ));
    }
    Ok(out)
}

fn write_store<I>(path: &Path, meta: &[u8], chunks: I) -> Result<()>
where
    I: Iterator<Item = Vec<f32>>,
{
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("store path {} has no file name", path.display())))?
        .to_string_lossy()
        .into_owned();
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let staged = (|| -> Result<()> {
        fs::write(tmp.join(META_FILE), meta).map_err(|e| Error::io(tmp.join(META_FILE), e))?;
        for (i, chunk) in chunks.enumerate() {
            let mut bytes = Vec::with_capacity(chunk.len() * 4);
            for v in chunk {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            let p = tmp.join(chunk_name(i));
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    })();
    if let Err(e) = staged {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }

    if path.exists() {
        let old = parent.join(format!(".{name}.old-{}", std::process::id()));
        if old.exists() {
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        }
        fs::rename(path, &old).map_err(|e| Error::io(path, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    } else {
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
