//! Run configuration for the command-line pipeline, stored as TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Thresholds, CHIP_SIZE, MIN_OVERLAP};
use crate::model::{ModelConfig, ProbeConfig, Task, TrainConfig};
use crate::sampling::GapSpec;
use crate::synth::{ProbeSetSpec, SynthSpec};
use crate::timestamp::Timestamp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalConfig {
    /// Dominant frequencies kept per pixel.
    pub k: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig { k: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub start: Timestamp,
    pub end: Timestamp,
    pub chip_size: usize,
    pub min_overlap: f64,
    pub thresholds: Thresholds,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            start: Timestamp::new(2018, 1).expect("valid"),
            end: Timestamp::new(2021, 3).expect("valid"),
            chip_size: CHIP_SIZE,
            min_overlap: MIN_OVERLAP,
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Standardize encoder inputs with band statistics of the training cube.
    pub standardize_inputs: bool,
    /// Fraction of pairs held out from training.
    pub holdout: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            standardize_inputs: true,
            holdout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub coords: usize,
    pub step: f64,
    pub batch: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            coords: 250,
            step: 1e-4,
            batch: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Everything a command needs; sections mirror the library modules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Model initialization seed.
    pub seed: u64,
    pub gaps: GapSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pretrain: PretrainConfig,
    pub signal: SignalConfig,
    pub synth: SynthSpec,
    pub ingest: IngestConfig,
    pub probe: ProbeConfig,
    pub probe_set: ProbeSetSpec,
    pub gradcheck: GradCheckConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Td,
            seed: 0,
            gaps: GapSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            pretrain: PretrainConfig::default(),
            signal: SignalConfig::default(),
            synth: SynthSpec::default(),
            ingest: IngestConfig::default(),
            probe: ProbeConfig::default(),
            probe_set: ProbeSetSpec::default(),
            gradcheck: GradCheckConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Sets every seed at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.synth.seed = seed;
        self.probe_set.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        self.ingest.thresholds.validate()?;
        self.probe_set.validate()?;
        if self.signal.k == 0 {
            return Err(Error::Config("signal.k must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.pretrain.holdout) {
            return Err(Error::Config("pretrain.holdout must lie in [0, 1)".into()));
        }
        if self.ingest.end < self.ingest.start {
            return Err(Error::Config("ingest.end before ingest.start".into()));
        }
        if self.gradcheck.coords == 0 || !(self.gradcheck.step > 0.0) || self.gradcheck.batch == 0 {
            return Err(Error::Config("gradcheck needs positive coords, step and batch".into()));
        }
        if let GapSpec::Set { gaps } = &self.gaps {
            if gaps.is_empty() {
                return Err(Error::Config("gap set is empty".into()));
            }
        }
        Ok(())
    }
}
