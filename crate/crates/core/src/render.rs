//! Frequency-map rendering to 8-bit RGB PNG.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array3, ArrayView2};

use crate::cube::FrequencyMap;
use crate::error::{Error, Result};

/// Upper end of the colormap; frequencies in cycles per month never exceed it.
pub const MAX_FREQUENCY: f32 = 0.5;
pub const LUT_SIZE: usize = 256;

/// Rainbow colormap from violet to red. No entry is black.
pub fn colormap() -> [[u8; 3]; LUT_SIZE] {
    let mut lut = [[0u8; 3]; LUT_SIZE];
    for (i, c) in lut.iter_mut().enumerate() {
        // hue from 270° down to 0°, full saturation and value
        let h = 270.0 * (1.0 - i as f64 / (LUT_SIZE - 1) as f64) / 60.0;
        let x = 1.0 - ((h % 2.0) - 1.0).abs();
        let (r, g, b) = match h as u32 {
            0 => (1.0, x, 0.0),
            1 => (x, 1.0, 0.0),
            2 => (0.0, 1.0, x),
            3 => (0.0, x, 1.0),
            _ => (x, 0.0, 1.0),
        };
        *c = [r, g, b].map(|v: f64| (v * 255.0).round() as u8);
    }
    lut
}

/// `H×W×3` colors: values clamped to `[0, MAX_FREQUENCY]` and binned into the
/// colormap, NaN as black.
pub fn colorize(map: ArrayView2<f32>) -> Array3<u8> {
    let lut = colormap();
    let (h, w) = map.dim();
    let mut out = Array3::zeros((h, w, 3));
    for ((y, x), &v) in map.indexed_iter() {
        if v.is_nan() {
            continue;
        }
        let i = ((v.clamp(0.0, MAX_FREQUENCY) / MAX_FREQUENCY) * (LUT_SIZE - 1) as f32).round() as usize;
        for (k, &c) in lut[i].iter().enumerate() {
            out[[y, x, k]] = c;
        }
    }
    out
}

pub fn write_png(rgb: &Array3<u8>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w, _) = rgb.dim();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let encoding = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = enc.write_header().map_err(encoding)?;
    let data: Vec<u8> = rgb.iter().copied().collect();
    writer.write_image_data(&data).map_err(encoding)?;
    writer.finish().map_err(encoding)
}

/// Renders channel 0 of a frequency map.
pub fn export_png(map: &FrequencyMap, path: impl AsRef<Path>) -> Result<()> {
    write_png(&colorize(map.data().index_axis(ndarray::Axis(0), 0)), path)
}
