use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Reads an 8-bit binary PGM (`P5`) raster.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Array2<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg.to_string());

    // header: magic, width, height, maxval, separated by whitespace and `#` comments
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PGM header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad number in PGM header"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM rasters are supported"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing separator after PGM header"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(Error::integrity(path, format!("{} raster bytes, expected {}", data.len(), w * h)));
    }
    Ok(Array2::from_shape_vec((h, w), data.to_vec()).expect("raster shape"))
}

/// Writes an 8-bit binary PGM with maxval 255.
pub fn write_pgm(path: impl AsRef<Path>, raster: ArrayView2<u8>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = raster.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(raster.iter());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
