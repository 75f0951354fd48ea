//! Self-supervised pretext tasks for agricultural satellite image time series.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`timestamp`], [`cube`] and [`store`]: monthly timestamps, reflectance cubes and
//!   their chunked on-disk layout.
//! * [`signal`]: per-pixel dominant temporal-frequency maps (NDVI, monthly
//!   regularization, Savitzky-Golay smoothing, DFT ranking).
//! * [`encodings`]: sinusoidal positional and month/year temporal encodings.
//! * [`sampling`]: bitemporal pair enumeration, time-difference labels, batches.
//! * [`model`]: a small ViT encoder with time-difference, frequency and
//!   future-frame heads, reverse-mode gradients, AdamW training and a linear probe.
//! * [`ingest`]: chip gridding, adaptive monthly scene selection, dataset builds.
//! * [`synth`]: seeded synthetic parcels with known phenology.

pub mod config;
pub mod cube;
pub mod encodings;
pub mod error;
pub mod ingest;
pub mod model;
pub mod render;
pub mod sampling;
pub mod signal;
pub mod store;
pub mod synth;
pub mod timestamp;

pub use cube::{Band, BitemporalSample, FrequencyMap, TimeSeriesCube};
pub use error::{Error, Result};
pub use timestamp::{months_between, Timestamp};
