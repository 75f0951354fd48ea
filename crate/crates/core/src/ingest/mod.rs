//! Chip gridding over an AOI raster, 3×3 neighbor expansion, adaptive
//! monthly scene selection and dataset builds from a pluggable imagery source.

mod build;
mod mock;
mod pgm;
mod select;
mod source;

use std::fmt;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{build_dataset, read_manifest, BuildReport, ChipEntry, Manifest, MonthEntry, MANIFEST_FILE};
pub use mock::{write_mock_source, MockSpec, CLOUD_REFLECTANCE};
pub use pgm::{read_pgm, write_pgm};
pub use select::{select_monthly, threshold_sequence, MonthlyChoice, Thresholds, THRESHOLD_TOLERANCE};
pub use source::{AcquisitionDate, AcquisitionRecord, FsSource, ImagerySource, Scene, SourceInfo};

pub const CHIP_SIZE: usize = 224;
pub const RESOLUTION_M: u32 = 10;
pub const MIN_OVERLAP: f64 = 0.8;

/// An axis-aligned square chip in source-grid pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipGeometry {
    pub origin_row: usize,
    pub origin_col: usize,
    pub size: usize,
    pub resolution_m: u32,
}

impl ChipGeometry {
    pub fn new(origin_row: usize, origin_col: usize, size: usize) -> Self {
        ChipGeometry {
            origin_row,
            origin_col,
            size,
            resolution_m: RESOLUTION_M,
        }
    }

    /// `r{row}_c{col}`.
    pub fn id(&self) -> String {
        format!("r{}_c{}", self.origin_row, self.origin_col)
    }

    pub fn overlaps(&self, other: &ChipGeometry) -> bool {
        self.origin_row < other.origin_row + other.size
            && other.origin_row < self.origin_row + self.size
            && self.origin_col < other.origin_col + other.size
            && other.origin_col < self.origin_col + self.size
    }
}

impl fmt::Display for ChipGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Non-overlapping tiling from `(0, 0)` in row-major order, keeping chips
/// whose in-AOI fraction is at least `min_overlap`. Partial tiles at the
/// right and bottom edges are not formed.
pub fn grid_chips(aoi: ArrayView2<bool>, chip_size: usize, min_overlap: f64) -> Result<Vec<ChipGeometry>> {
    let (h, w) = aoi.dim();
    if chip_size == 0 {
        return Err(Error::Config("chip size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&min_overlap) {
        return Err(Error::Config(format!("min_overlap {min_overlap} outside [0, 1]")));
    }
    if h < chip_size || w < chip_size {
        return Err(Error::Precondition(format!(
            "AOI mask {h}×{w} smaller than chip size {chip_size}"
        )));
    }
    let area = (chip_size * chip_size) as f64;
    let mut out = Vec::new();
    for r in (0..=h - chip_size).step_by(chip_size) {
        for c in (0..=w - chip_size).step_by(chip_size) {
            let inside = aoi
                .slice(ndarray::s![r..r + chip_size, c..c + chip_size])
                .iter()
                .filter(|&&v| v)
                .count();
            if inside as f64 / area >= min_overlap {
                out.push(ChipGeometry::new(r, c, chip_size));
            }
        }
    }
    Ok(out)
}

/// Position of a chip within its 3×3 neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborPos {
    Center,
    TopLeft,
    Top,
    TopRight,
    Left,
    Right,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl NeighborPos {
    pub const ORDER: [NeighborPos; 9] = [
        NeighborPos::Center,
        NeighborPos::TopLeft,
        NeighborPos::Top,
        NeighborPos::TopRight,
        NeighborPos::Left,
        NeighborPos::Right,
        NeighborPos::BottomLeft,
        NeighborPos::Bottom,
        NeighborPos::BottomRight,
    ];

    /// `(row, col)` offset in chip units.
    pub fn offset(self) -> (i64, i64) {
        match self {
            NeighborPos::Center => (0, 0),
            NeighborPos::TopLeft => (-1, -1),
            NeighborPos::Top => (-1, 0),
            NeighborPos::TopRight => (-1, 1),
            NeighborPos::Left => (0, -1),
            NeighborPos::Right => (0, 1),
            NeighborPos::BottomLeft => (1, -1),
            NeighborPos::Bottom => (1, 0),
            NeighborPos::BottomRight => (1, 1),
        }
    }
}

/// In-bounds members of a 3×3 neighborhood, plus the positions dropped for
/// falling outside the source grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGrid {
    pub chips: Vec<(NeighborPos, ChipGeometry)>,
    pub dropped: Vec<NeighborPos>,
}

impl NeighborGrid {
    pub fn geometries(&self) -> Vec<ChipGeometry> {
        self.chips.iter().map(|c| c.1).collect()
    }
}

/// The chip and its eight neighbors, center first, then top-left, top,
/// top-right, left, right, bottom-left, bottom, bottom-right. The source
/// grid is `grid_height×grid_width` pixels.
pub fn neighbor_grid(chip: ChipGeometry, grid_height: usize, grid_width: usize) -> Result<NeighborGrid> {
    if chip.size == 0
        || chip.origin_row + chip.size > grid_height
        || chip.origin_col + chip.size > grid_width
    {
        return Err(Error::Precondition(format!(
            "chip {chip} of size {} outside the {grid_height}×{grid_width} grid",
            chip.size
        )));
    }
    let s = chip.size as i64;
    let mut out = NeighborGrid { chips: Vec::with_capacity(9), dropped: Vec::new() };
    for pos in NeighborPos::ORDER {
        let (dr, dc) = pos.offset();
        let r = chip.origin_row as i64 + dr * s;
        let c = chip.origin_col as i64 + dc * s;
        if r < 0 || c < 0 || r + s > grid_height as i64 || c + s > grid_width as i64 {
            log::debug!("neighbor {pos:?} of {chip} falls outside the grid");
            out.dropped.push(pos);
            continue;
        }
        out.chips.push((
            pos,
            ChipGeometry {
                origin_row: r as usize,
                origin_col: c as usize,
                ..chip
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn full_mask_tiles_exactly() {
        let m = Array2::from_elem((448, 448), true);
        let chips = grid_chips(m.view(), 224, 0.8).unwrap();
        assert_eq!(chips.len(), 4);
        assert_eq!(chips[1], ChipGeometry::new(0, 224, 224));
        assert_eq!(chips[2], ChipGeometry::new(224, 0, 224));
    }

    #[test]
    fn empty_mask_gives_nothing() {
        let m = Array2::from_elem((448, 448), false);
        assert!(grid_chips(m.view(), 224, 0.8).unwrap().is_empty());
    }

    #[test]
    fn half_masked_quadrant() {
        let mut m = Array2::from_elem((448, 448), true);
        m.slice_mut(ndarray::s![224..448, 224..336]).fill(false);
        assert_eq!(grid_chips(m.view(), 224, 0.8).unwrap().len(), 3);
        assert_eq!(grid_chips(m.view(), 224, 0.5).unwrap().len(), 4);
    }

    #[test]
    fn undersized_mask_is_rejected() {
        let m = Array2::from_elem((100, 300), true);
        assert!(grid_chips(m.view(), 224, 0.8).is_err());
    }

    #[test]
    fn interior_neighbors_form_a_block() {
        let chip = ChipGeometry::new(224, 224, 224);
        let g = neighbor_grid(chip, 672, 672).unwrap();
        assert_eq!(g.chips.len(), 9);
        assert_eq!(g.chips[0], (NeighborPos::Center, chip));
        let geoms = g.geometries();
        for i in 0..9 {
            for j in i + 1..9 {
                assert!(!geoms[i].overlaps(&geoms[j]));
            }
        }
        let min_r = geoms.iter().map(|c| c.origin_row).min().unwrap();
        let max_r = geoms.iter().map(|c| c.origin_row + c.size).max().unwrap();
        assert_eq!((min_r, max_r), (0, 672));
        assert_eq!(g.chips[1].1, ChipGeometry::new(0, 0, 224));
        assert_eq!(g.chips[8].1, ChipGeometry::new(448, 448, 224));
    }

    #[test]
    fn corner_keeps_three_neighbors() {
        let g = neighbor_grid(ChipGeometry::new(0, 0, 224), 672, 672).unwrap();
        assert_eq!(g.chips.len(), 4);
        let pos: Vec<_> = g.chips.iter().map(|c| c.0).collect();
        assert_eq!(pos, vec![NeighborPos::Center, NeighborPos::Right, NeighborPos::Bottom, NeighborPos::BottomRight]);
        assert_eq!(g.dropped.len(), 5);
    }
}
