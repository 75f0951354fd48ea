//! Reverse-mode autodiff over row-major 2-D tensors.

use super::params::ParamStore;
use super::Real;

pub type NodeId = usize;

pub(crate) const LN_EPS: f64 = 1e-6;
pub(crate) const SIGMA_FLOOR: f64 = 1e-6;

enum Op<F> {
    Input,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Gelu(NodeId),
    Attention {
        qkv: NodeId,
        heads: usize,
        probs: Vec<F>,
    },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows {
        x: NodeId,
        start: usize,
    },
    Scale(NodeId, F),
    Sum(Vec<NodeId>),
    CrossEntropy {
        logits: NodeId,
        label: usize,
        probs: Vec<F>,
    },
    NormMse {
        pred: NodeId,
        target: Vec<F>,
    },
}

struct Node<F> {
    rows: usize,
    cols: usize,
    /// Empty for parameter leaves, which read from the store.
    value: Vec<F>,
    op: Op<F>,
}

/// Records a forward pass over a borrowed parameter store.
pub struct Tape<'p, F: Real> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<NodeId>>,
}

/// Per-parameter gradients; `None` where the loss does not depend on a parameter.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    pub grads: Vec<Option<Vec<F>>>,
}

impl<'p, F: Real> Tape<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    pub fn value(&self, id: NodeId) -> &[F] {
        match self.nodes[id].op {
            Op::Param(p) => self.params.value(p),
            _ => &self.nodes[id].value,
        }
    }

    pub fn scalar(&self, id: NodeId) -> F {
        self.value(id)[0]
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<F>, op: Op<F>) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<F>) -> NodeId {
        assert_eq!(value.len(), rows * cols, "input shape mismatch");
        self.push(rows, cols, value, Op::Input)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, p: usize) -> NodeId {
        if let Some(id) = self.param_nodes[p] {
            return id;
        }
        let (r, c) = self.params.shape(p);
        let id = self.push(r, c, Vec::new(), Op::Param(p));
        self.param_nodes[p] = Some(id);
        id
    }

    pub fn param_named(&mut self, name: &str) -> NodeId {
        let p = self
            .params
            .index(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(p)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dims");
        let mut out = vec![F::zero(); n * m];
        matmul_into(self.value(a), self.value(b), &mut out, n, k, m);
        self.push(n, m, out, Op::MatMul(a, b))
    }

    /// Adds a `1×m` row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let (n, m) = self.shape(x);
        assert_eq!(self.shape(b), (1, m), "bias shape");
        let bv = self.value(b);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(m) {
            for (o, &bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        self.push(n, m, out, Op::AddBias(x, b))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let s = self.shape(a);
        assert_eq!(s, self.shape(b), "add shapes");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        self.push(s.0, s.1, out, Op::Add(a, b))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (n, d) = self.shape(x);
        assert_eq!(self.shape(gamma), (1, d));
        assert_eq!(self.shape(beta), (1, d));
        let (g, b) = (self.value(gamma), self.value(beta));
        let inv_d = F::of(1.0 / d as f64);
        let eps = F::of(LN_EPS);
        let mut xhat = Vec::with_capacity(n * d);
        let mut rstd = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n * d);
        for row in self.value(x).chunks_exact(d) {
            let mean = row.iter().copied().sum::<F>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
            let r = F::one() / (var + eps).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (row[j] - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        self.push(n, d, out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let (n, m) = self.shape(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(n, m, out, Op::Gelu(x))
    }

    /// Multi-head scaled dot-product self-attention over packed `[q | k | v]`
    /// rows of width `3·D`. Returns the concatenated heads, `n×D`.
    pub fn attention(&mut self, qkv: NodeId, heads: usize) -> NodeId {
        let (n, w) = self.shape(qkv);
        assert_eq!(w % 3, 0);
        let d = w / 3;
        assert_eq!(d % heads, 0);
        let dh = d / heads;
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let x = self.value(qkv);
        let mut probs = vec![F::zero(); heads * n * n];
        let mut out = vec![F::zero(); n * d];
        for h in 0..heads {
            let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
            let ph = &mut probs[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let q = &x[i * w + qo..i * w + qo + dh];
                let prow = &mut ph[i * n..(i + 1) * n];
                let mut max = F::neg_infinity();
                for j in 0..n {
                    let k = &x[j * w + ko..j * w + ko + dh];
                    let s = dot(q, k) * scale;
                    prow[j] = s;
                    if s > max {
                        max = s;
                    }
                }
                let mut z = F::zero();
                for p in prow.iter_mut() {
                    *p = (*p - max).exp();
                    z += *p;
                }
                let inv = F::one() / z;
                let orow = &mut out[i * d + qo..i * d + qo + dh];
                for j in 0..n {
                    prow[j] *= inv;
                    let v = &x[j * w + vo..j * w + vo + dh];
                    axpy(prow[j], v, orow);
                }
            }
        }
        self.push(n, d, out, Op::Attention { qkv, heads, probs })
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let cols = self.shape(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, cols, "concat_rows width");
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        self.push(rows, cols, out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let (pr, pc) = self.shape(p);
                assert_eq!(pr, rows, "concat_cols height");
                out.extend_from_slice(&self.value(p)[r * pc..(r + 1) * pc]);
            }
        }
        self.push(rows, cols, out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (n, m) = self.shape(x);
        assert!(start + len <= n, "slice_rows out of range");
        let out = self.value(x)[start * m..(start + len) * m].to_vec();
        self.push(len, m, out, Op::SliceRows { x, start })
    }

    pub fn scale(&mut self, x: NodeId, s: F) -> NodeId {
        let (n, m) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * s).collect();
        self.push(n, m, out, Op::Scale(x, s))
    }

    /// Elementwise sum of same-shaped nodes, left to right.
    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        let s = self.shape(parts[0]);
        let mut out = self.value(parts[0]).to_vec();
        for &p in &parts[1..] {
            assert_eq!(self.shape(p), s, "sum shapes");
            for (o, &v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
        }
        self.push(s.0, s.1, out, Op::Sum(parts.to_vec()))
    }

    /// Cross-entropy of a `1×C` logit row against `label`.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> NodeId {
        let (r, c) = self.shape(logits);
        assert_eq!(r, 1);
        assert!(label < c, "label {label} out of {c} classes");
        let (loss, probs) = cross_entropy(self.value(logits), label);
        self.push(1, 1, vec![loss], Op::CrossEntropy { logits, label, probs })
    }

    /// Normalized MSE of `pred` (`N×L`, one patch per row) against `target`
    /// patches, each standardized by its own mean and deviation.
    pub fn norm_mse(&mut self, pred: NodeId, target: &[F]) -> NodeId {
        let (n, l) = self.shape(pred);
        assert_eq!(target.len(), n * l, "target shape");
        let target = normalize_patches(target, l);
        let loss = mse(self.value(pred), &target);
        self.push(1, 1, vec![loss], Op::NormMse { pred, target })
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Gradients<F> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut g: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss] = Some(vec![F::one()]);
        let mut out: Vec<Option<Vec<F>>> = (0..self.params.len()).map(|_| None).collect();

        for id in (0..=loss).rev() {
            let Some(dy) = g[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => accumulate(&mut out[*p], &dy),
                Op::MatMul(a, b) => {
                    let (n, k) = self.shape(*a);
                    let m = node.cols;
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = slot(&mut g, *a, n * k);
                    for i in 0..n {
                        let drow = &dy[i * m..(i + 1) * m];
                        for p in 0..k {
                            da[i * k + p] += dot(drow, &bv[p * m..(p + 1) * m]);
                        }
                    }
                    let db = slot(&mut g, *b, k * m);
                    for i in 0..n {
                        let drow = &dy[i * m..(i + 1) * m];
                        for p in 0..k {
                            axpy(av[i * k + p], drow, &mut db[p * m..(p + 1) * m]);
                        }
                    }
                }
                Op::AddBias(x, b) => {
                    let m = node.cols;
                    accumulate(&mut g[*x], &dy);
                    let db = slot(&mut g, *b, m);
                    for row in dy.chunks_exact(m) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut g[*a], &dy);
                    accumulate(&mut g[*b], &dy);
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let d = node.cols;
                    let gv = self.value(*gamma);
                    let inv_d = F::of(1.0 / d as f64);
                    let mut dgamma = vec![F::zero(); d];
                    let mut dbeta = vec![F::zero(); d];
                    let mut dx = vec![F::zero(); node.rows * d];
                    let mut dh = vec![F::zero(); d];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let dyr = &dy[r * d..(r + 1) * d];
                        let xh = &xhat[r * d..(r + 1) * d];
                        for j in 0..d {
                            dgamma[j] += dyr[j] * xh[j];
                            dbeta[j] += dyr[j];
                            dh[j] = dyr[j] * gv[j];
                        }
                        let mean_dh = dh.iter().copied().sum::<F>() * inv_d;
                        let mean_dhx = dh.iter().zip(xh).map(|(&a, &b)| a * b).sum::<F>() * inv_d;
                        for j in 0..d {
                            dx[r * d + j] = rs * (dh[j] - mean_dh - xh[j] * mean_dhx);
                        }
                    }
                    accumulate(&mut g[*x], &dx);
                    accumulate(&mut g[*gamma], &dgamma);
                    accumulate(&mut g[*beta], &dbeta);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let dx: Vec<F> = dy.iter().zip(xv).map(|(&d, &v)| d * gelu_grad(v)).collect();
                    accumulate(&mut g[*x], &dx);
                }
                Op::Attention { qkv, heads, probs } => {
                    let n = node.rows;
                    let d = node.cols;
                    let w = 3 * d;
                    let dh = d / heads;
                    let scale = F::of(1.0 / (dh as f64).sqrt());
                    let x = self.value(*qkv);
                    let mut dx = vec![F::zero(); n * w];
                    let mut dp = vec![F::zero(); n];
                    for h in 0..*heads {
                        let (qo, ko, vo) = (h * dh, d + h * dh, 2 * d + h * dh);
                        let ph = &probs[h * n * n..(h + 1) * n * n];
                        for i in 0..n {
                            let prow = &ph[i * n..(i + 1) * n];
                            let dout = &dy[i * d + qo..i * d + qo + dh];
                            let mut rowsum = F::zero();
                            for j in 0..n {
                                let v = &x[j * w + vo..j * w + vo + dh];
                                dp[j] = dot(dout, v);
                                rowsum += dp[j] * prow[j];
                                axpy(prow[j], dout, &mut dx[j * w + vo..j * w + vo + dh]);
                            }
                            for j in 0..n {
                                let ds = prow[j] * (dp[j] - rowsum) * scale;
                                if ds == F::zero() {
                                    continue;
                                }
                                let (qrow, krow) = (i * w + qo, j * w + ko);
                                for t in 0..dh {
                                    dx[qrow + t] += ds * x[krow + t];
                                    dx[krow + t] += ds * x[qrow + t];
                                }
                            }
                        }
                    }
                    accumulate(&mut g[*qkv], &dx);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let len = self.shape(p).0 * node.cols;
                        accumulate(&mut g[p], &dy[off..off + len]);
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.shape(p).1;
                        let dp = slot(&mut g, p, node.rows * pc);
                        for r in 0..node.rows {
                            let src = &dy[r * node.cols + off..r * node.cols + off + pc];
                            for (d, &v) in dp[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                *d += v;
                            }
                        }
                        off += pc;
                    }
                }
                Op::SliceRows { x, start } => {
                    let (n, m) = self.shape(*x);
                    let dx = slot(&mut g, *x, n * m);
                    for (d, &v) in dx[start * m..].iter_mut().zip(&dy) {
                        *d += v;
                    }
                }
                Op::Scale(x, s) => {
                    let dx: Vec<F> = dy.iter().map(|&v| v * *s).collect();
                    accumulate(&mut g[*x], &dx);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        accumulate(&mut g[p], &dy);
                    }
                }
                Op::CrossEntropy { logits, label, probs } => {
                    let mut dl: Vec<F> = probs.iter().map(|&p| p * dy[0]).collect();
                    dl[*label] -= dy[0];
                    accumulate(&mut g[*logits], &dl);
                }
                Op::NormMse { pred, target } => {
                    let pv = self.value(*pred);
                    let c = F::of(2.0 / pv.len() as f64) * dy[0];
                    let dp: Vec<F> = pv.iter().zip(target).map(|(&p, &t)| c * (p - t)).collect();
                    accumulate(&mut g[*pred], &dp);
                }
            }
        }
        Gradients { grads: out }
    }
}

fn slot<F: Real>(g: &mut [Option<Vec<F>>], id: NodeId, len: usize) -> &mut Vec<F> {
    g[id].get_or_insert_with(|| vec![F::zero(); len])
}

fn accumulate<F: Real>(dst: &mut Option<Vec<F>>, src: &[F]) {
    match dst {
        Some(d) => {
            for (a, &b) in d.iter_mut().zip(src) {
                *a += b;
            }
        }
        None => *dst = Some(src.to_vec()),
    }
}

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `c += a·b` for row-major `a: n×k`, `b: k×m`.
pub(crate) fn matmul_into<F: Real>(a: &[F], b: &[F], c: &mut [F], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let crow = &mut c[i * m..(i + 1) * m];
        for p in 0..k {
            axpy(a[i * k + p], &b[p * m..(p + 1) * m], crow);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu<F: Real>(x: F) -> F {
    let inner = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    F::of(0.5) * x * (F::one() + inner.tanh())
}

fn gelu_grad<F: Real>(x: F) -> F {
    let x2 = x * x;
    let inner = F::of(GELU_C) * (x + F::of(GELU_A) * x2 * x);
    let t = inner.tanh();
    let dinner = F::of(GELU_C) * (F::one() + F::of(3.0 * GELU_A) * x2);
    F::of(0.5) * (F::one() + t) + F::of(0.5) * x * (F::one() - t * t) * dinner
}

/// `(loss, softmax)` with max subtraction.
pub(crate) fn cross_entropy<F: Real>(logits: &[F], label: usize) -> (F, Vec<F>) {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut probs: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: F = probs.iter().copied().sum();
    for p in probs.iter_mut() {
        *p = *p / z;
    }
    (z.ln() + max - logits[label], probs)
}

/// Standardizes each consecutive run of `patch_len` values by its own mean and
/// population deviation, with the deviation floored at `1e-6`.
pub fn normalize_patches<F: Real>(target: &[F], patch_len: usize) -> Vec<F> {
    let inv = F::of(1.0 / patch_len as f64);
    let floor = F::of(SIGMA_FLOOR);
    let mut out = Vec::with_capacity(target.len());
    for patch in target.chunks_exact(patch_len) {
        let mean = patch.iter().copied().sum::<F>() * inv;
        let var = patch.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv;
        let sd = var.sqrt().max(floor);
        out.extend(patch.iter().map(|&v| (v - mean) / sd));
    }
    out
}

fn mse<F: Real>(a: &[F], b: &[F]) -> F {
    let s: F = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    s / F::of(a.len() as f64)
}

/// Mean over patches and elements of `(pred − normalized target)²`. Both
/// slices are patch-major with `patch_len` values per patch.
pub fn normalized_mse<F: Real>(pred: &[F], target: &[F], patch_len: usize) -> F {
    assert_eq!(pred.len(), target.len(), "normalized_mse shapes");
    assert!(patch_len > 0 && pred.len().is_multiple_of(patch_len), "partial patch");
    mse(pred, &normalize_patches(target, patch_len))
}
