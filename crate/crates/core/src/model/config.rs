use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::cube::TimeSeriesCube;
use crate::error::{Error, Result};

/// Encoder geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViTConfig {
    /// Square input side in pixels.
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    /// Token width `D_in`.
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
}

impl Default for ViTConfig {
    fn default() -> Self {
        ViTConfig {
            image_size: 64,
            patch_size: 8,
            channels: 4,
            dim: 64,
            depth: 4,
            heads: 4,
            mlp_ratio: 4,
        }
    }
}

impl ViTConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch tokens `N`, excluding CLS.
    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_area(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("dim", self.dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("mlp_ratio", self.mlp_ratio),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("vit.{name} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !self.dim.is_multiple_of(2) || self.dim < 4 {
            return Err(Error::Config(format!("dim {} must be even and >= 4", self.dim)));
        }
        Ok(())
    }
}

/// Pretext head sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub td_mlp_layers: usize,
    pub fp_decoder_layers: usize,
    pub ff_translator_layers: usize,
    pub ff_decoder_layers: usize,
    /// Decoder token width; the encoder width when unset.
    pub decoder_dim: Option<usize>,
    /// Time-difference classes `C`.
    pub td_classes: usize,
    /// Frequency channels `K` predicted by the frequency head.
    pub fp_k: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            td_mlp_layers: 3,
            fp_decoder_layers: 6,
            ff_translator_layers: 2,
            ff_decoder_layers: 4,
            decoder_dim: None,
            td_classes: 4,
            fp_k: 3,
        }
    }
}

/// Per-band affine standardization applied to encoder inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    /// Band statistics over every finite value of a cube.
    pub fn from_cube(cube: &TimeSeriesCube) -> Self {
        let c = cube.dims().1;
        let mut mean = Vec::with_capacity(c);
        let mut std = Vec::with_capacity(c);
        for ci in 0..c {
            let band = cube.data().index_axis(Axis(1), ci);
            let vals: Vec<f64> = band.iter().filter(|v| v.is_finite()).map(|&v| v as f64).collect();
            let n = vals.len().max(1) as f64;
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt().max(1e-6));
        }
        InputNorm { mean, std }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vit: ViTConfig,
    pub heads: HeadConfig,
    /// Input standardization; raw reflectance when unset.
    pub input_norm: Option<InputNorm>,
}

impl ModelConfig {
    pub fn decoder_dim(&self) -> usize {
        self.heads.decoder_dim.unwrap_or(self.vit.dim)
    }

    pub fn validate(&self) -> Result<()> {
        self.vit.validate()?;
        let h = &self.heads;
        if h.td_mlp_layers == 0 {
            return Err(Error::Config("td_mlp_layers must be positive".into()));
        }
        if h.td_classes < 2 {
            return Err(Error::Config("td_classes must be at least 2".into()));
        }
        if h.fp_k == 0 {
            return Err(Error::Config("fp_k must be positive".into()));
        }
        if let Some(norm) = &self.input_norm {
            let c = self.vit.channels;
            if norm.mean.len() != c || norm.std.len() != c {
                return Err(Error::Config(format!("input_norm needs {c} means and deviations")));
            }
            if norm.std.iter().chain(&norm.mean).any(|v| !v.is_finite()) || norm.std.iter().any(|&s| s <= 0.0) {
                return Err(Error::Config("input_norm values must be finite with positive deviations".into()));
            }
        }
        let dd = self.decoder_dim();
        if !dd.is_multiple_of(self.vit.heads) || !dd.is_multiple_of(2) || dd < 4 {
            return Err(Error::Config(format!(
                "decoder_dim {dd} must be even, >= 4 and divisible by heads {}",
                self.vit.heads
            )));
        }
        Ok(())
    }

    /// A tiny configuration for gradient checks and quick tests.
    pub fn toy() -> Self {
        ModelConfig {
            vit: ViTConfig {
                image_size: 8,
                patch_size: 4,
                channels: 4,
                dim: 8,
                depth: 1,
                heads: 2,
                mlp_ratio: 2,
            },
            heads: HeadConfig {
                td_mlp_layers: 3,
                fp_decoder_layers: 1,
                ff_translator_layers: 1,
                ff_decoder_layers: 1,
                decoder_dim: None,
                td_classes: 4,
                fp_k: 3,
            },
            input_norm: None,
        }
    }
}
