use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tape::Gradients;
use super::{ModelConfig, Real};
use crate::error::{Error, Result};

pub const PARAMS_JSON: &str = "params.json";
pub const PARAMS_BIN: &str = "params.bin";

/// Initialization rule for a parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with the given deviation, truncated at two deviations.
    TruncNormal(f64),
}

/// Named 2-D parameter tensors with same-shape gradient buffers.
#[derive(Clone, Debug)]
pub struct ParamStore<F> {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    values: Vec<Vec<F>>,
    grads: Vec<Vec<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<F: Real> ParamStore<F> {
    pub fn add<R: Rng>(&mut self, name: &str, shape: (usize, usize), init: Init, rng: &mut R) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let len = shape.0 * shape.1;
        let values = match init {
            Init::Zeros => vec![F::zero(); len],
            Init::Ones => vec![F::one(); len],
            Init::TruncNormal(std) => (0..len)
                .map(|_| loop {
                    let z: f64 = StandardNormal.sample(rng);
                    if z.abs() <= 2.0 {
                        break F::of(z * std);
                    }
                })
                .collect(),
        };
        self.insert(name, shape, values)
    }

    fn insert(&mut self, name: &str, shape: (usize, usize), values: Vec<F>) -> usize {
        let id = self.names.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.shapes.push(shape);
        self.grads.push(vec![F::zero(); values.len()]);
        self.values.push(values);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn shape(&self, id: usize) -> (usize, usize) {
        self.shapes[id]
    }

    pub fn value(&self, id: usize) -> &[F] {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut [F] {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &[F] {
        &self.grads[id]
    }

    pub fn get(&self, name: &str) -> Option<&[F]> {
        self.index(name).map(|i| self.value(i))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(F::zero());
        }
    }

    /// Adds `scale·grads` into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients<F>, scale: F) {
        for (buf, g) in self.grads.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                for (b, &v) in buf.iter_mut().zip(g) {
                    *b += scale * v;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.f64() * g.f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, s: F) {
        for g in self.grads.iter_mut().flatten() {
            *g *= s;
        }
    }

    /// First parameter whose gradient buffer holds a non-finite value.
    pub fn non_finite_grad(&self) -> Option<&str> {
        self.grads
            .iter()
            .position(|g| g.iter().any(|v| !v.is_finite()))
            .map(|i| self.names[i].as_str())
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        let mut out = ParamStore::default();
        for i in 0..self.len() {
            let v = self.values[i].iter().map(|&x| G::of(x.f64())).collect();
            out.insert(&self.names[i], self.shapes[i], v);
        }
        out
    }

    fn sorted_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.len()).collect();
        ids.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        ids
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    dtype: String,
    byte_order: String,
    config: ModelConfig,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamMeta {
    name: String,
    shape: [usize; 2],
}

/// Writes `params.json` and `params.bin` (little-endian f32, parameters
/// concatenated in lexicographic name order).
pub fn save_checkpoint<F: Real>(dir: &Path, config: &ModelConfig, params: &ParamStore<F>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ids = params.sorted_ids();
    let meta = CheckpointMeta {
        dtype: "float32".into(),
        byte_order: "little".into(),
        config: config.clone(),
        params: ids
            .iter()
            .map(|&i| ParamMeta {
                name: params.names[i].clone(),
                shape: [params.shapes[i].0, params.shapes[i].1],
            })
            .collect(),
    };
    let mut bin = Vec::with_capacity(params.num_scalars() * 4);
    for &i in &ids {
        for &v in &params.values[i] {
            bin.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(&meta)?;
    let jp = dir.join(PARAMS_JSON);
    fs::write(&jp, json + "\n").map_err(|e| Error::io(&jp, e))?;
    let bp = dir.join(PARAMS_BIN);
    fs::write(&bp, bin).map_err(|e| Error::io(&bp, e))?;
    Ok(())
}

/// Reads a checkpoint back into a store laid out exactly as
/// `Model::new(config)` would lay it out.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelConfig, ParamStore<f32>)> {
    let jp = dir.join(PARAMS_JSON);
    let text = fs::read_to_string(&jp).map_err(|e| Error::format(&jp, format!("cannot read: {e}")))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&jp, e.to_string()))?;
    if meta.dtype != "float32" || meta.byte_order != "little" {
        return Err(Error::format(&jp, format!("unsupported dtype {} / {}", meta.dtype, meta.byte_order)));
    }
    let bp = dir.join(PARAMS_BIN);
    let bin = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let want: usize = meta.params.iter().map(|p| p.shape[0] * p.shape[1]).sum();
    if bin.len() != want * 4 {
        return Err(Error::integrity(&bp, format!("{} bytes, expected {}", bin.len(), want * 4)));
    }
    let mut store = super::Model::<f32>::layout(&meta.config)?;
    let mut off = 0;
    let mut seen = vec![false; store.len()];
    for p in &meta.params {
        let id = store
            .index(&p.name)
            .ok_or_else(|| Error::integrity(&jp, format!("unexpected parameter {}", p.name)))?;
        if store.shapes[id] != (p.shape[0], p.shape[1]) {
            return Err(Error::integrity(&jp, format!("shape mismatch for {}", p.name)));
        }
        let len = p.shape[0] * p.shape[1];
        for (k, v) in store.values[id].iter_mut().enumerate() {
            let b = &bin[(off + k) * 4..(off + k) * 4 + 4];
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        off += len;
        seen[id] = true;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::integrity(&jp, format!("missing parameter {}", store.names[i])));
    }
    Ok((meta.config, store))
}
