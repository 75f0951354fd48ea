//! Python bindings. Arrays cross the boundary as little-endian `float32`
//! bytes plus a shape, ready for `numpy.frombuffer(...).reshape(shape)`.

use std::path::PathBuf;

use agripretext::ingest::{select_monthly as select, AcquisitionDate, AcquisitionRecord, Thresholds};
use agripretext::model::{self as m, InputNorm, ModelConfig, Task, TrainConfig, TrainData};
use agripretext::sampling::{self, GapSpec};
use agripretext::signal::{self, construct_frequency_map, RegularSeries};
use agripretext::synth::{self, SynthSpec};
use agripretext::{encodings, store, BitemporalSample, Timestamp};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn py_err(e: agripretext::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn f32_bytes<'py>(py: Python<'py>, values: impl Iterator<Item = f32>) -> Bound<'py, PyBytes> {
    let buf: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    PyBytes::new(py, &buf)
}

fn timestamp(s: &str) -> PyResult<Timestamp> {
    s.parse().map_err(py_err)
}

fn gaps(max_gap: u32, gaps: Option<Vec<u32>>) -> GapSpec {
    match gaps {
        Some(g) => GapSpec::set(g),
        None => GapSpec::Range { max_gap },
    }
}

fn column(values: Vec<f64>) -> RegularSeries {
    let n = values.len();
    let v = Array2::from_shape_vec((n, 1), values).expect("column shape");
    RegularSeries::new(v, Timestamp::new(2000, 1).expect("valid"))
}

/// A `T×C×H×W` reflectance cube.
#[pyclass(module = "agripretext")]
struct Cube {
    inner: agripretext::TimeSeriesCube,
}

#[pymethods]
impl Cube {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Cube { inner: store::read_cube(path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        store::write_cube(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        self.inner.dims()
    }

    /// `YYYY-MM` strings.
    #[getter]
    fn timestamps(&self) -> Vec<String> {
        self.inner.timestamps().iter().map(|t| t.to_string()).collect()
    }

    #[getter]
    fn bands(&self) -> Vec<&'static str> {
        self.inner.bands().iter().map(|b| b.name()).collect()
    }

    fn data_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        f32_bytes(py, self.inner.data().iter().copied())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Cube(shape={:?})", self.inner.dims())
    }
}

/// A `K×H×W` dominant-frequency map in cycles per month.
#[pyclass(module = "agripretext")]
struct FrequencyMap {
    inner: agripretext::FrequencyMap,
}

#[pymethods]
impl FrequencyMap {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(FrequencyMap { inner: store::read_frequency_map(path).map_err(py_err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        store::write_frequency_map(&self.inner, path).map_err(py_err)
    }

    fn export_png(&self, path: PathBuf) -> PyResult<()> {
        agripretext::render::export_png(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn data_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        f32_bytes(py, self.inner.data().iter().copied())
    }
}

/// Synthetic parcels with known NDVI periods. Returns `(cube, parcel ids, periods)`.
#[pyfunction]
#[pyo3(signature = (height=64, width=64, months=36, parcels=2, periods=None, phases=None, noise_sigma=0.0, seed=0, start="2018-01"))]
#[allow(clippy::too_many_arguments)]
fn gen_sits(
    height: usize,
    width: usize,
    months: usize,
    parcels: usize,
    periods: Option<Vec<u32>>,
    phases: Option<Vec<f64>>,
    noise_sigma: f64,
    seed: u64,
    start: &str,
) -> PyResult<(Cube, Vec<Vec<u16>>, Vec<u32>)> {
    let spec = SynthSpec {
        height,
        width,
        months,
        parcels,
        periods: periods.unwrap_or_default(),
        phases: phases.unwrap_or_default(),
        noise_sigma,
        seed,
        start: timestamp(start)?,
    };
    let out = synth::gen_sits(&spec).map_err(py_err)?;
    let ids = out.parcels.outer_iter().map(|r| r.to_vec()).collect();
    Ok((Cube { inner: out.cube }, ids, out.periods))
}

#[pyfunction]
#[pyo3(signature = (cube, k=signal::DEFAULT_K))]
fn frequency_map(cube: &Cube, k: usize) -> PyResult<FrequencyMap> {
    let (inner, _) = construct_frequency_map(&cube.inner, k).map_err(py_err)?;
    Ok(FrequencyMap { inner })
}

/// Top-`k` positive frequencies of one regular monthly series.
#[pyfunction]
#[pyo3(signature = (series, k=signal::DEFAULT_K))]
fn dominant_frequencies(series: Vec<f64>, k: usize) -> PyResult<Vec<f64>> {
    let d = signal::dominant_frequencies(&column(series), k).map_err(py_err)?;
    Ok(d.freqs.column(0).to_vec())
}

#[pyfunction]
#[pyo3(signature = (series, window=signal::SAVGOL_WINDOW, polyorder=signal::SAVGOL_POLYORDER))]
fn savgol_smooth(series: Vec<f64>, window: usize, polyorder: usize) -> PyResult<Vec<f64>> {
    let out = signal::savgol_smooth(&column(series), window, polyorder).map_err(py_err)?;
    Ok(out.values.column(0).to_vec())
}

/// Month/year encoding of a `YYYY-MM` timestamp, `2·width` values.
#[pyfunction]
fn temporal_encoding(t: &str, width: usize) -> PyResult<Vec<f64>> {
    let cfg = encodings::EncodingConfig::with_width(width);
    cfg.validate().map_err(py_err)?;
    Ok(encodings::temporal_encoding(timestamp(t)?, &cfg))
}

/// Ordered frame pairs `(i, j)` of a cube; a gap set overrides `max_gap`.
#[pyfunction]
#[pyo3(signature = (cube, max_gap=3, gap_set=None))]
fn enumerate_pairs(cube: &Cube, max_gap: u32, gap_set: Option<Vec<u32>>) -> Vec<(usize, usize)> {
    sampling::enumerate_pairs(cube.inner.timestamps(), &gaps(max_gap, gap_set))
}

#[pyfunction]
#[pyo3(signature = (gap_months, classes=4))]
fn td_label(gap_months: i64, classes: usize) -> PyResult<usize> {
    Ok(sampling::td_label(gap_months, classes).map_err(py_err)?.0)
}

/// Index, threshold and fallback flag of the chosen record, or `None`.
#[pyfunction]
#[pyo3(signature = (valid_fractions, threshold=0.9, step=0.1, floor=0.5))]
fn select_monthly(valid_fractions: Vec<f64>, threshold: f64, step: f64, floor: f64) -> PyResult<Option<(usize, f64, bool)>> {
    let records = valid_fractions
        .into_iter()
        .enumerate()
        .map(|(i, valid_fraction)| {
            let date = AcquisitionDate::new(2000, 1, 1 + i as u32).map_err(py_err)?;
            Ok(AcquisitionRecord { date, valid_fraction })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let choice = select(&records, &Thresholds { threshold, step, floor }).map_err(py_err)?;
    Ok(choice.map(|c| (c.index, c.threshold, c.fallback)))
}

fn task(name: &str) -> PyResult<Task> {
    name.parse().map_err(py_err)
}

/// ViT encoder with the three pretext heads.
#[pyclass(module = "agripretext")]
struct Model {
    inner: m::Model<f32>,
}

#[pymethods]
impl Model {
    /// `config` is TOML with `[vit]` and `[heads]` tables; defaults otherwise.
    /// With `norm_from`, inputs are standardized by that cube's band statistics.
    #[new]
    #[pyo3(signature = (config=None, seed=0, norm_from=None))]
    fn new(config: Option<&str>, seed: u64, norm_from: Option<&Cube>) -> PyResult<Self> {
        let mut cfg: ModelConfig = match config {
            Some(text) => toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ModelConfig::default(),
        };
        if let Some(c) = norm_from {
            cfg.input_norm = Some(InputNorm::from_cube(&c.inner));
        }
        Ok(Model { inner: m::Model::new(cfg, seed).map_err(py_err)? })
    }

    /// The tiny gradient-check configuration.
    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn toy(seed: u64) -> PyResult<Self> {
        Ok(Model { inner: m::Model::new(ModelConfig::toy(), seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (cfg, params) = m::load_checkpoint(&path).map_err(py_err)?;
        Ok(Model { inner: m::Model::from_params(cfg, params).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        m::save_checkpoint(&path, self.inner.config(), self.inner.params()).map_err(py_err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.params().num_scalars()
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.inner.config().vit.image_size
    }

    /// Loss of `task` on frames `i` and `j` of `cube`.
    #[pyo3(signature = (task, cube, i, j, fmap=None))]
    fn loss(&self, task: &str, cube: &Cube, i: usize, j: usize, fmap: Option<&FrequencyMap>) -> PyResult<f64> {
        if i.max(j) >= cube.inner.len() {
            return Err(PyValueError::new_err("frame index out of range"));
        }
        let s = BitemporalSample::from_cube(&cube.inner, i, j, fmap.map(|f| &f.inner)).map_err(py_err)?;
        let loss = self.inner.loss(self::task(task)?, &[s]).map_err(py_err)?;
        Ok(loss as f64)
    }

    /// Tokens of frame `t`, `(N+1)×D` with CLS first, as bytes plus shape.
    fn encode<'py>(&self, py: Python<'py>, cube: &Cube, t: usize) -> PyResult<(Bound<'py, PyBytes>, (usize, usize))> {
        if t >= cube.inner.len() {
            return Err(PyValueError::new_err("frame index out of range"));
        }
        let z = self.inner.encode(cube.inner.frame(t)).map_err(py_err)?;
        Ok((f32_bytes(py, z.iter().copied()), z.dim()))
    }

    /// Trains in place and returns the per-epoch mean losses.
    #[pyo3(signature = (task, cube, epochs=10, lr=1e-3, batch_size=8, warmup_epochs=0, seed=0, max_gap=3, gap_set=None, fmap=None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        task: &str,
        cube: &Cube,
        epochs: usize,
        lr: f64,
        batch_size: usize,
        warmup_epochs: usize,
        seed: u64,
        max_gap: u32,
        gap_set: Option<Vec<u32>>,
        fmap: Option<&FrequencyMap>,
    ) -> PyResult<Vec<f64>> {
        let pairs = sampling::enumerate_pairs(cube.inner.timestamps(), &gaps(max_gap, gap_set));
        let data = TrainData { cube: &cube.inner, pairs, freq_map: fmap.map(|f| &f.inner) };
        let cfg = TrainConfig { epochs, batch_size, lr, warmup_epochs, seed, ..Default::default() };
        let report = m::train(&mut self.inner, self::task(task)?, &data, &cfg).map_err(py_err)?;
        Ok(report.epoch_losses)
    }
}

#[pymodule]
#[pyo3(name = "agripretext")]
fn agripretext_module(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_class::<Cube>()?;
    module.add_class::<FrequencyMap>()?;
    module.add_class::<Model>()?;
    module.add_function(wrap_pyfunction!(gen_sits, module)?)?;
    module.add_function(wrap_pyfunction!(frequency_map, module)?)?;
    module.add_function(wrap_pyfunction!(dominant_frequencies, module)?)?;
    module.add_function(wrap_pyfunction!(savgol_smooth, module)?)?;
    module.add_function(wrap_pyfunction!(temporal_encoding, module)?)?;
    module.add_function(wrap_pyfunction!(enumerate_pairs, module)?)?;
    module.add_function(wrap_pyfunction!(td_label, module)?)?;
    module.add_function(wrap_pyfunction!(select_monthly, module)?)?;
    Ok(())
}
