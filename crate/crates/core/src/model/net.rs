use std::collections::HashMap;

use ndarray::{Array2, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use super::tape::{Gradients, NodeId, Tape};
use super::{ModelConfig, Real};
use crate::cube::BitemporalSample;
use crate::encodings::{patch_positions, temporal_encoding, EncodingConfig};
use crate::error::{Error, Result};
use crate::sampling::td_label;
use crate::timestamp::Timestamp;

pub(crate) const INIT_STD: f64 = 0.02;

/// Pretext task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Td,
    Fp,
    Ff,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Td => "td",
            Task::Fp => "fp",
            Task::Ff => "ff",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td" => Ok(Task::Td),
            "fp" => Ok(Task::Fp),
            "ff" => Ok(Task::Ff),
            other => Err(Error::Config(format!("unknown task `{other}` (td, fp, ff)"))),
        }
    }
}

/// Encoder, the three pretext heads and the fixed encodings they use.
#[derive(Clone, Debug)]
pub struct Model<F: Real> {
    config: ModelConfig,
    params: ParamStore<F>,
    pe_enc: Vec<F>,
    pe_dec: Vec<F>,
}

fn add_block<F: Real>(ps: &mut ParamStore<F>, p: &str, d: usize, hidden: usize, rng: &mut ChaCha8Rng) {
    let w = Init::TruncNormal(INIT_STD);
    ps.add(&format!("{p}.ln1.g"), (1, d), Init::Ones, rng);
    ps.add(&format!("{p}.ln1.b"), (1, d), Init::Zeros, rng);
    ps.add(&format!("{p}.attn.qkv.w"), (d, 3 * d), w, rng);
    ps.add(&format!("{p}.attn.qkv.b"), (1, 3 * d), Init::Zeros, rng);
    ps.add(&format!("{p}.attn.proj.w"), (d, d), w, rng);
    ps.add(&format!("{p}.attn.proj.b"), (1, d), Init::Zeros, rng);
    ps.add(&format!("{p}.ln2.g"), (1, d), Init::Ones, rng);
    ps.add(&format!("{p}.ln2.b"), (1, d), Init::Zeros, rng);
    ps.add(&format!("{p}.mlp.fc1.w"), (d, hidden), w, rng);
    ps.add(&format!("{p}.mlp.fc1.b"), (1, hidden), Init::Zeros, rng);
    ps.add(&format!("{p}.mlp.fc2.w"), (hidden, d), w, rng);
    ps.add(&format!("{p}.mlp.fc2.b"), (1, d), Init::Zeros, rng);
}

fn add_linear<F: Real>(ps: &mut ParamStore<F>, p: &str, shape: (usize, usize), zero: bool, rng: &mut ChaCha8Rng) {
    let init = if zero { Init::Zeros } else { Init::TruncNormal(INIT_STD) };
    ps.add(&format!("{p}.w"), shape, init, rng);
    ps.add(&format!("{p}.b"), (1, shape.1), Init::Zeros, rng);
}

/// A linear layer with xavier-scaled weights.
fn add_xavier<F: Real>(ps: &mut ParamStore<F>, p: &str, shape: (usize, usize), rng: &mut ChaCha8Rng) {
    let std = (2.0 / (shape.0 + shape.1) as f64).sqrt();
    ps.add(&format!("{p}.w"), shape, Init::TruncNormal(std), rng);
    ps.add(&format!("{p}.b"), (1, shape.1), Init::Zeros, rng);
}

fn add_norm<F: Real>(ps: &mut ParamStore<F>, p: &str, d: usize, rng: &mut ChaCha8Rng) {
    ps.add(&format!("{p}.g"), (1, d), Init::Ones, rng);
    ps.add(&format!("{p}.b"), (1, d), Init::Zeros, rng);
}

fn build_params<F: Real>(cfg: &ModelConfig, seed: u64) -> ParamStore<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::default();
    let v = &cfg.vit;
    let h = &cfg.heads;
    let d = v.dim;
    let dd = cfg.decoder_dim();
    let patch_in = v.channels * v.patch_area();

    // xavier-scaled so patch content is not drowned by the unit-amplitude positions
    let embed_std = (2.0 / (patch_in + d) as f64).sqrt();
    ps.add("enc.embed.w", (patch_in, d), Init::TruncNormal(embed_std), &mut rng);
    ps.add("enc.embed.b", (1, d), Init::Zeros, &mut rng);
    ps.add("enc.cls", (1, d), Init::TruncNormal(INIT_STD), &mut rng);
    for i in 0..v.depth {
        add_block(&mut ps, &format!("enc.blocks.{i}"), d, d * v.mlp_ratio, &mut rng);
    }
    add_norm(&mut ps, "enc.norm", d, &mut rng);

    for i in 0..h.td_mlp_layers {
        let last = i + 1 == h.td_mlp_layers;
        let fan_in = if i == 0 { 2 * d } else { d };
        let fan_out = if last { h.td_classes } else { d };
        add_linear(&mut ps, &format!("td.fc{i}"), (fan_in, fan_out), last, &mut rng);
    }

    add_linear(&mut ps, "fp.embed", (d, dd), false, &mut rng);
    // time encodings also enter at full scale
    add_xavier(&mut ps, "fp.te_proj", (2 * dd, dd), &mut rng);
    for i in 0..h.fp_decoder_layers {
        add_block(&mut ps, &format!("fp.blocks.{i}"), dd, dd * v.mlp_ratio, &mut rng);
    }
    add_norm(&mut ps, "fp.norm", dd, &mut rng);
    add_linear(&mut ps, "fp.head", (dd, h.fp_k * v.patch_area()), true, &mut rng);

    add_xavier(&mut ps, "ff.te1_proj", (2 * d, d), &mut rng);
    add_xavier(&mut ps, "ff.te2_proj", (2 * d, d), &mut rng);
    for i in 0..h.ff_translator_layers {
        add_block(&mut ps, &format!("ff.translator.{i}"), d, d * v.mlp_ratio, &mut rng);
    }
    add_linear(&mut ps, "ff.embed", (d, dd), false, &mut rng);
    for i in 0..h.ff_decoder_layers {
        add_block(&mut ps, &format!("ff.decoder.{i}"), dd, dd * v.mlp_ratio, &mut rng);
    }
    add_norm(&mut ps, "ff.norm", dd, &mut rng);
    add_linear(&mut ps, "ff.head", (dd, v.channels * v.patch_area()), true, &mut rng);
    ps
}

/// `C×H×W` to patch-major rows of `C·p²` values (channel, then row, then column).
pub fn patchify<F: Real>(image: ArrayView3<f32>, patch: usize) -> Vec<F> {
    let (c, h, w) = image.dim();
    let (gh, gw) = (h / patch, w / patch);
    let mut out = Vec::with_capacity(c * h * w);
    for py in 0..gh {
        for px in 0..gw {
            for ci in 0..c {
                for dy in 0..patch {
                    for dx in 0..patch {
                        out.push(F::of(image[[ci, py * patch + dy, px * patch + dx]] as f64));
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`patchify`].
pub fn unpatchify<F: Real>(rows: &[F], channels: usize, size: usize, patch: usize) -> Array3<F> {
    let g = size / patch;
    let mut out = Array3::zeros((channels, size, size));
    let mut it = rows.iter();
    for py in 0..g {
        for px in 0..g {
            for ci in 0..channels {
                for dy in 0..patch {
                    for dx in 0..patch {
                        out[[ci, py * patch + dy, px * patch + dx]] = *it.next().expect("row count");
                    }
                }
            }
        }
    }
    out
}

impl<F: Real> Model<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = build_params(&config, seed);
        Ok(Self::assemble(config, params))
    }

    /// An initialized store with this configuration's names and shapes.
    pub(crate) fn layout(config: &ModelConfig) -> Result<ParamStore<F>> {
        config.validate()?;
        Ok(build_params(config, 0))
    }

    /// Wraps loaded parameters; names and shapes must match the layout.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self> {
        let want = Self::layout(&config)?;
        if want.len() != params.len()
            || (0..want.len()).any(|i| want.name(i) != params.name(i) || want.shape(i) != params.shape(i))
        {
            return Err(Error::Config("parameters do not match the model configuration".into()));
        }
        Ok(Self::assemble(config, params))
    }

    fn assemble(config: ModelConfig, params: ParamStore<F>) -> Self {
        let n = config.vit.num_patches();
        let to_f = |v: Vec<f64>| v.into_iter().map(F::of).collect();
        let pe_enc = to_f(patch_positions(n, &EncodingConfig::with_width(config.vit.dim)));
        let pe_dec = to_f(patch_positions(n, &EncodingConfig::with_width(config.decoder_dim())));
        Model { config, params, pe_enc, pe_dec }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model::assemble(self.config.clone(), self.params.cast())
    }

    /// Adds `N(0, std²)` noise to every parameter. Used to move away from the
    /// zero-initialized heads before gradient checks.
    pub fn perturb(&mut self, std: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite std");
        for i in 0..self.params.len() {
            for v in self.params.value_mut(i) {
                *v += F::of(normal.sample(&mut rng));
            }
        }
    }

    fn check_image(&self, image: ArrayView3<f32>) -> Result<()> {
        let v = &self.config.vit;
        let want = (v.channels, v.image_size, v.image_size);
        if image.dim() != want {
            return Err(Error::Precondition(format!(
                "image shape {:?} does not match model input {:?}",
                image.dim(),
                want
            )));
        }
        if image.iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition(
                "non-finite pixel in encoder input; impute missing values first".into(),
            ));
        }
        Ok(())
    }

    fn block(&self, tape: &mut Tape<'_, F>, p: &str, x: NodeId) -> NodeId {
        let heads = self.config.vit.heads;
        let ln = |t: &mut Tape<'_, F>, name: &str, x| {
            let g = t.param_named(&format!("{p}.{name}.g"));
            let b = t.param_named(&format!("{p}.{name}.b"));
            t.layer_norm(x, g, b)
        };
        let lin = |t: &mut Tape<'_, F>, name: &str, x| {
            let w = t.param_named(&format!("{p}.{name}.w"));
            let b = t.param_named(&format!("{p}.{name}.b"));
            t.linear(x, w, b)
        };
        let h = ln(tape, "ln1", x);
        let qkv = lin(tape, "attn.qkv", h);
        let a = tape.attention(qkv, heads);
        let a = lin(tape, "attn.proj", a);
        let x = tape.add(x, a);
        let h = ln(tape, "ln2", x);
        let h = lin(tape, "mlp.fc1", h);
        let h = tape.gelu(h);
        let h = lin(tape, "mlp.fc2", h);
        tape.add(x, h)
    }

    fn linear(&self, tape: &mut Tape<'_, F>, p: &str, x: NodeId) -> NodeId {
        let w = tape.param_named(&format!("{p}.w"));
        let b = tape.param_named(&format!("{p}.b"));
        tape.linear(x, w, b)
    }

    fn norm(&self, tape: &mut Tape<'_, F>, p: &str, x: NodeId) -> NodeId {
        let g = tape.param_named(&format!("{p}.g"));
        let b = tape.param_named(&format!("{p}.b"));
        tape.layer_norm(x, g, b)
    }

    fn te_input(&self, tape: &mut Tape<'_, F>, t: Timestamp, width: usize) -> NodeId {
        let te: Vec<F> = temporal_encoding(t, &EncodingConfig::with_width(width))
            .into_iter()
            .map(F::of)
            .collect();
        tape.input(1, 2 * width, te)
    }

    /// Records the encoder on `tape`; the result is `(N+1)×D` with CLS in row 0.
    pub fn encode_node(&self, tape: &mut Tape<'_, F>, image: ArrayView3<f32>) -> Result<NodeId> {
        self.check_image(image)?;
        let v = &self.config.vit;
        let n = v.num_patches();
        let mut rows = patchify::<F>(image, v.patch_size);
        if let Some(norm) = &self.config.input_norm {
            let area = v.patch_area();
            for (k, x) in rows.iter_mut().enumerate() {
                let c = (k / area) % v.channels;
                *x = (*x - F::of(norm.mean[c])) / F::of(norm.std[c]);
            }
        }
        let patches = tape.input(n, v.channels * v.patch_area(), rows);
        let x = self.linear(tape, "enc.embed", patches);
        let pe = tape.input(n, v.dim, self.pe_enc.clone());
        let x = tape.add(x, pe);
        let cls = tape.param_named("enc.cls");
        let mut x = tape.concat_rows(&[cls, x]);
        for i in 0..v.depth {
            x = self.block(tape, &format!("enc.blocks.{i}"), x);
        }
        Ok(self.norm(tape, "enc.norm", x))
    }

    /// `1×C` logits from the CLS rows of two encodings.
    pub fn td_logits_node(&self, tape: &mut Tape<'_, F>, z1: NodeId, z2: NodeId) -> NodeId {
        let c1 = tape.slice_rows(z1, 0, 1);
        let c2 = tape.slice_rows(z2, 0, 1);
        let mut x = tape.concat_cols(&[c1, c2]);
        let layers = self.config.heads.td_mlp_layers;
        for i in 0..layers {
            x = self.linear(tape, &format!("td.fc{i}"), x);
            if i + 1 < layers {
                x = tape.gelu(x);
            }
        }
        x
    }

    /// `N×(K·p²)` frequency predictions for the first frame's patches.
    pub fn fp_node(&self, tape: &mut Tape<'_, F>, z1: NodeId, z2: NodeId, t1: Timestamp, t2: Timestamp) -> NodeId {
        let n = self.config.vit.num_patches();
        let dd = self.config.decoder_dim();
        let pe = tape.input(n, dd, self.pe_dec.clone());
        let mut halves = Vec::with_capacity(2);
        for (z, t) in [(z1, t1), (z2, t2)] {
            let p = tape.slice_rows(z, 1, n);
            let e = self.linear(tape, "fp.embed", p);
            let e = tape.add(e, pe);
            let te = self.te_input(tape, t, dd);
            let te = self.linear(tape, "fp.te_proj", te);
            halves.push(tape.add_bias(e, te));
        }
        let mut x = tape.concat_rows(&halves);
        for i in 0..self.config.heads.fp_decoder_layers {
            x = self.block(tape, &format!("fp.blocks.{i}"), x);
        }
        let x = self.norm(tape, "fp.norm", x);
        let first = tape.slice_rows(x, 0, n);
        self.linear(tape, "fp.head", first)
    }

    /// `N×(C·p²)` predicted patches of the frame at `t2`.
    pub fn ff_node(&self, tape: &mut Tape<'_, F>, z1: NodeId, t1: Timestamp, t2: Timestamp) -> NodeId {
        let v = &self.config.vit;
        let n = v.num_patches();
        let p = tape.slice_rows(z1, 1, n);
        let pe = tape.input(n, v.dim, self.pe_enc.clone());
        let x = tape.add(p, pe);
        let te1 = self.te_input(tape, t1, v.dim);
        let te1 = self.linear(tape, "ff.te1_proj", te1);
        let te2 = self.te_input(tape, t2, v.dim);
        let te2 = self.linear(tape, "ff.te2_proj", te2);
        let te = tape.add(te1, te2);
        let mut x = tape.add_bias(x, te);
        for i in 0..self.config.heads.ff_translator_layers {
            x = self.block(tape, &format!("ff.translator.{i}"), x);
        }
        x = self.linear(tape, "ff.embed", x);
        for i in 0..self.config.heads.ff_decoder_layers {
            x = self.block(tape, &format!("ff.decoder.{i}"), x);
        }
        let x = self.norm(tape, "ff.norm", x);
        self.linear(tape, "ff.head", x)
    }

    fn fp_target(&self, sample: &BitemporalSample) -> Result<Vec<F>> {
        let fmap = sample
            .freq_map
            .ok_or_else(|| Error::Precondition("frequency task needs a frequency map".into()))?;
        let v = &self.config.vit;
        let want = (self.config.heads.fp_k, v.image_size, v.image_size);
        if fmap.dims() != want {
            return Err(Error::Precondition(format!(
                "frequency map shape {:?}, model expects {:?}",
                fmap.dims(),
                want
            )));
        }
        if fmap.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::Precondition("frequency map has NaN pixels".into()));
        }
        Ok(patchify(fmap.data().view(), v.patch_size))
    }

    /// Records the loss of one sample; `cache` maps frame data to encoder nodes.
    pub fn sample_loss_node(
        &self,
        tape: &mut Tape<'_, F>,
        task: Task,
        sample: &BitemporalSample,
        cache: &mut HashMap<*const f32, NodeId>,
    ) -> Result<NodeId> {
        let mut enc = |tape: &mut Tape<'_, F>, x: ArrayView3<f32>| -> Result<NodeId> {
            if let Some(&id) = cache.get(&x.as_ptr()) {
                return Ok(id);
            }
            let id = self.encode_node(tape, x)?;
            cache.insert(x.as_ptr(), id);
            Ok(id)
        };
        match task {
            Task::Td => {
                let label = td_label(sample.gap_months as i64, self.config.heads.td_classes)?.0;
                let z1 = enc(tape, sample.x1)?;
                let z2 = enc(tape, sample.x2)?;
                let l12 = self.td_logits_node(tape, z1, z2);
                let l21 = self.td_logits_node(tape, z2, z1);
                let a = tape.cross_entropy(l12, label);
                let b = tape.cross_entropy(l21, label);
                let s = tape.sum(&[a, b]);
                Ok(tape.scale(s, F::of(0.5)))
            }
            Task::Fp => {
                let target = self.fp_target(sample)?;
                let z1 = enc(tape, sample.x1)?;
                let z2 = enc(tape, sample.x2)?;
                let pred = self.fp_node(tape, z1, z2, sample.t1, sample.t2);
                Ok(tape.norm_mse(pred, &target))
            }
            Task::Ff => {
                self.check_image(sample.x2)?;
                let target = patchify(sample.x2, self.config.vit.patch_size);
                let z1 = enc(tape, sample.x1)?;
                let pred = self.ff_node(tape, z1, sample.t1, sample.t2);
                Ok(tape.norm_mse(pred, &target))
            }
        }
    }

    /// Records the mean loss over `batch`, encoding each distinct frame once.
    pub fn batch_loss_node(&self, tape: &mut Tape<'_, F>, task: Task, batch: &[BitemporalSample]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty batch".into()));
        }
        let mut cache = HashMap::new();
        let losses = batch
            .iter()
            .map(|s| self.sample_loss_node(tape, task, s, &mut cache))
            .collect::<Result<Vec<_>>>()?;
        let s = tape.sum(&losses);
        Ok(tape.scale(s, F::of(1.0 / batch.len() as f64)))
    }

    /// Mean batch loss and its gradients.
    pub fn loss_and_grad(&self, task: Task, batch: &[BitemporalSample]) -> Result<(F, Gradients<F>)> {
        let mut tape = Tape::new(&self.params);
        let loss = self.batch_loss_node(&mut tape, task, batch)?;
        Ok((tape.scalar(loss), tape.backward(loss)))
    }

    /// Mean batch loss without gradients.
    pub fn loss(&self, task: Task, batch: &[BitemporalSample]) -> Result<F> {
        let mut tape = Tape::new(&self.params);
        let loss = self.batch_loss_node(&mut tape, task, batch)?;
        Ok(tape.scalar(loss))
    }

    /// Encoder tokens `(N+1)×D`, CLS in row 0.
    pub fn encode(&self, image: ArrayView3<f32>) -> Result<Array2<F>> {
        let mut tape = Tape::new(&self.params);
        let z = self.encode_node(&mut tape, image)?;
        Ok(to_array(&tape, z))
    }

    /// Logits for a pair of CLS vectors.
    pub fn td_forward(&self, z1_cls: &[F], z2_cls: &[F]) -> Vec<F> {
        let d = self.config.vit.dim;
        assert_eq!((z1_cls.len(), z2_cls.len()), (d, d), "CLS width");
        let mut tape = Tape::new(&self.params);
        let a = tape.input(1, d, z1_cls.to_vec());
        let b = tape.input(1, d, z2_cls.to_vec());
        let l = self.td_logits_node(&mut tape, a, b);
        tape.value(l).to_vec()
    }

    pub fn td_loss(&self, sample: &BitemporalSample) -> Result<F> {
        self.loss(Task::Td, std::slice::from_ref(sample))
    }

    pub fn fp_loss(&self, sample: &BitemporalSample) -> Result<F> {
        self.loss(Task::Fp, std::slice::from_ref(sample))
    }

    pub fn ff_loss(&self, sample: &BitemporalSample) -> Result<F> {
        self.loss(Task::Ff, std::slice::from_ref(sample))
    }

    fn tokens_input(&self, tape: &mut Tape<'_, F>, z: &Array2<F>) -> NodeId {
        let v = &self.config.vit;
        assert_eq!(z.dim(), (v.num_patches() + 1, v.dim), "token shape");
        tape.input(z.nrows(), z.ncols(), z.iter().copied().collect())
    }

    /// `K×H×W` frequency prediction from two encodings.
    pub fn fp_forward(&self, z1: &Array2<F>, z2: &Array2<F>, t1: Timestamp, t2: Timestamp) -> Array3<F> {
        let mut tape = Tape::new(&self.params);
        let a = self.tokens_input(&mut tape, z1);
        let b = self.tokens_input(&mut tape, z2);
        let out = self.fp_node(&mut tape, a, b, t1, t2);
        let v = &self.config.vit;
        unpatchify(tape.value(out), self.config.heads.fp_k, v.image_size, v.patch_size)
    }

    /// `C×H×W` predicted frame at `t2` from the encoding of the frame at `t1`.
    pub fn ff_forward(&self, z1: &Array2<F>, t1: Timestamp, t2: Timestamp) -> Array3<F> {
        let mut tape = Tape::new(&self.params);
        let a = self.tokens_input(&mut tape, z1);
        let out = self.ff_node(&mut tape, a, t1, t2);
        let v = &self.config.vit;
        unpatchify(tape.value(out), v.channels, v.image_size, v.patch_size)
    }
}

fn to_array<F: Real>(tape: &Tape<'_, F>, id: NodeId) -> Array2<F> {
    Array2::from_shape_vec(tape.shape(id), tape.value(id).to_vec()).expect("node shape")
}
