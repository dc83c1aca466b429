//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and a single reverse sweep visits them in a valid topological order.

use super::gemm::{gemm, View};
use super::{ParamId, ParamStore, Result, Tensor, TensorError};
use crate::rng::LabRng;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow { x: Var, bias: Var },
    Relu(Var),
    Gelu(Var),
    Softmax { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    Block { x: Var, row0: usize, col0: usize },
    Stitch { parts: Vec<(Var, usize, usize)> },
    Sum(Var),
    Pick { x: Var, index: usize },
    Dropout { x: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Append-only computation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    /// Test hook: scales the input gradient of `MatMul`'s left operand.
    #[doc(hidden)]
    pub corrupt_matmul_grad: Option<f64>,
}

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(TensorError::NotMatrix { op, shape: s.to_vec() }),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable copy of a stored parameter; see [`Tape::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone());
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient after [`Tape::backward`]; `None` if `v` was not reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn mat(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        matrix_dims(op, &self.nodes[v.0].value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn matmul_general(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ar, ac) = self.mat("matmul", a)?;
        let (br, bc) = self.mat("matmul", b)?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        {
            let av = View::row_major(self.value(a).data(), ar, ac);
            let bv = View::row_major(self.value(b).data(), br, bc);
            let av = if ta { av.t() } else { av };
            let bv = if tb { bv.t() } else { bv };
            gemm(av, bv, 0.0, &mut out, n, 1);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul { a, b, ta, tb }, rg))
    }

    /// `a · b` for `[m×k]·[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_general(a, b, false, false)
    }

    /// `a · bᵀ` for `[m×k]·[n×k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_general(a, b, false, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x);
        let t = Tensor {
            shape: value.shape().to_vec(),
            data: value.data().iter().map(|v| v * factor).collect(),
        };
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, factor), rg)
    }

    /// Adds `bias` (length = last extent of `x`) to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.value(bias).numel() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor { shape, data }, Op::AddRow { x, bias }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let t = Tensor {
            shape: value.shape().to_vec(),
            data: value.data().iter().map(|v| v.max(0.0)).collect(),
        };
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let t = Tensor {
            shape: value.shape().to_vec(),
            data: value
                .data()
                .iter()
                .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()))
                .collect(),
        };
        let rg = self.rg(x);
        self.push(t, Op::Gelu(x), rg)
    }

    /// Row-wise softmax. `mask`, when given, has one flag per element;
    /// `false` entries get probability exactly zero.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let value = self.value(x);
        let cols = value.cols();
        if let Some(m) = mask {
            if m.len() != value.numel() {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_rows",
                    left: value.shape().to_vec(),
                    right: vec![m.len()],
                });
            }
        }
        let mut out = vec![0.0; value.numel()];
        for (r, (row, dst)) in value.data().chunks(cols).zip(out.chunks_mut(cols)).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[r * cols + j]);
            let max = (0..cols)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::FullyMaskedRow { row: r });
            }
            let mut total = 0.0;
            for j in 0..cols {
                if keep(j) {
                    dst[j] = (row[j] - max).exp();
                    total += dst[j];
                }
            }
            dst.iter_mut().for_each(|v| *v /= total);
        }
        let shape = value.shape().to_vec();
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape, data: out }, Op::Softmax { x }, rg))
    }

    /// Per-row normalization to zero mean and unit variance (epsilon inside
    /// the square root), followed by an elementwise affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let value = self.value(x);
        let d = value.cols();
        for p in [gain, bias] {
            if self.value(p).numel() != d {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: value.shape().to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = value.rows();
        let mut xhat = vec![0.0; value.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; value.numel()];
        for r in 0..rows {
            let row = &value.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let shape = value.shape().to_vec();
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::LayerNorm { x, gain, bias, xhat, inv_std },
            rg,
        ))
    }

    /// Mean negative log-likelihood (nats) of `targets` under row-wise
    /// softmax of `logits` `[t×V]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let value = self.value(logits);
        let (t, vocab) = matrix_dims("cross_entropy", value)?;
        if targets.len() != t {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: value.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some((position, &target)) = targets.iter().enumerate().find(|(_, &y)| y >= vocab) {
            return Err(TensorError::TargetOutOfRange { position, target, vocab });
        }
        let mut probs = vec![0.0; t * vocab];
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            let row = value.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..vocab {
                let e = (row[j] - max).exp();
                probs[r * vocab + j] = e;
                total += e;
            }
            probs[r * vocab..(r + 1) * vocab].iter_mut().for_each(|p| *p /= total);
            loss += max + total.ln() - row[y];
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss / t as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Rows `ids` of `table`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.mat("gather_rows", table)?;
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange { index: id, extent: rows });
            }
            data.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor {
                shape: vec![ids.len(), cols],
                data,
            },
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Copy of the `rows×cols` sub-matrix of `x` starting at `(row0, col0)`.
    pub fn block(&mut self, x: Var, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Var> {
        let (xr, xc) = self.mat("block", x)?;
        if row0 + rows > xr || col0 + cols > xc || rows == 0 || cols == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "block",
                left: vec![xr, xc],
                right: vec![row0 + rows, col0 + cols],
            });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&src[r * xc + col0..r * xc + col0 + cols]);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor { shape: vec![rows, cols], data }, Op::Block { x, row0, col0 }, rg))
    }

    /// Assembles a `rows×cols` matrix from matrix parts placed at the given
    /// offsets. Uncovered entries are zero; overlapping parts add.
    pub fn stitch(&mut self, parts: &[(Var, usize, usize)], rows: usize, cols: usize) -> Result<Var> {
        let mut data = vec![0.0; rows * cols];
        for &(p, r0, c0) in parts {
            let (pr, pc) = self.mat("stitch", p)?;
            if r0 + pr > rows || c0 + pc > cols {
                return Err(TensorError::ShapeMismatch {
                    op: "stitch",
                    left: vec![rows, cols],
                    right: vec![r0 + pr, c0 + pc],
                });
            }
            let src = self.value(p).data();
            for r in 0..pr {
                let dst = &mut data[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + pc];
                dst.iter_mut().zip(&src[r * pc..(r + 1) * pc]).for_each(|(d, s)| *d += s);
            }
        }
        let rg = parts.iter().any(|&(p, _, _)| self.rg(p));
        Ok(self.push(
            Tensor {
                shape: vec![rows, cols],
                data,
            },
            Op::Stitch { parts: parts.to_vec() },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Scalar element `index` (flat, row-major) of `x`.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let n = self.value(x).numel();
        if index >= n {
            return Err(TensorError::IndexOutOfRange { index, extent: n });
        }
        let v = self.value(x).data()[index];
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::Pick { x, index }, rg))
    }

    /// Inverted dropout. With `rate == 0` this is the identity and records nothing.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut LabRng) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let value = self.value(x);
        let mask: Vec<f64> = (0..value.numel())
            .map(|_| if rng.unit_f64() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let t = Tensor {
            shape: value.shape().to_vec(),
            data: value.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        };
        let rg = self.rg(x);
        self.push(t, Op::Dropout { x, mask }, rg)
    }

    /// Propagates d(root)/d(node) to every node that reaches `root`.
    /// Gradients from a previous call are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.shape(root).to_vec();
        if self.value(root).numel() != 1 {
            return Err(TensorError::NonScalarRoot { shape });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let node = &nodes[i];
        let val = |v: Var| &nodes[v.0].value;
        let wants = |v: Var| nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                let (ar, ac) = (val(a).shape()[0], val(a).shape()[1]);
                let (br, bc) = (val(b).shape()[0], val(b).shape()[1]);
                let av = View::row_major(val(a).data(), ar, ac);
                let bv = View::row_major(val(b).data(), br, bc);
                let opa = if ta { av.t() } else { av };
                let opb = if tb { bv.t() } else { bv };
                let (m, n) = (opa.rows, opb.cols);
                let gv = View::row_major(g, m, n);
                if wants(a) {
                    // d op(a) = g · op(b)ᵀ, written through op(a)'s strides.
                    let da = accumulate(&mut grads[a.0], ar * ac);
                    if let Some(f) = self.corrupt_matmul_grad {
                        let mut tmp = vec![0.0; ar * ac];
                        gemm(gv, opb.t(), 0.0, &mut tmp, opa.rs, opa.cs);
                        da.iter_mut().zip(tmp).for_each(|(d, t)| *d += f * t);
                    } else {
                        gemm(gv, opb.t(), 1.0, da, opa.rs, opa.cs);
                    }
                }
                if wants(b) {
                    let db = accumulate(&mut grads[b.0], br * bc);
                    gemm(opa.t(), gv, 1.0, db, opb.rs, opb.cs);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        let d = accumulate(&mut grads[v.0], g.len());
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if wants(a) {
                    let other = val(b).data();
                    let d = accumulate(&mut grads[a.0], g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * other[k];
                    }
                }
                if wants(b) {
                    let other = val(a).data();
                    let d = accumulate(&mut grads[b.0], g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * other[k];
                    }
                }
            }
            Op::Scale(x, f) => {
                let d = accumulate(&mut grads[x.0], g.len());
                d.iter_mut().zip(g).for_each(|(d, g)| *d += f * g);
            }
            Op::AddRow { x, bias } => {
                let cols = val(*bias).numel();
                if wants(*x) {
                    let d = accumulate(&mut grads[x.0], g.len());
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if wants(*bias) {
                    let d = accumulate(&mut grads[bias.0], cols);
                    for row in g.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = val(*x).data();
                let d = accumulate(&mut grads[x.0], g.len());
                for k in 0..g.len() {
                    if xv[k] > 0.0 {
                        d[k] += g[k];
                    }
                }
            }
            Op::Gelu(x) => {
                let xv = val(*x).data();
                let d = accumulate(&mut grads[x.0], g.len());
                for k in 0..g.len() {
                    let v = xv[k];
                    let u = GELU_C * (v + 0.044715 * v * v * v);
                    let th = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
                    d[k] += g[k] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
                }
            }
            Op::Softmax { x } => {
                let y = node.value.data();
                let cols = node.value.cols();
                let d = accumulate(&mut grads[x.0], g.len());
                for ((yr, gr), dr) in y.chunks(cols).zip(g.chunks(cols)).zip(d.chunks_mut(cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..cols {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let dcols = val(*gain).numel();
                let gv = val(*gain).data();
                if wants(*gain) {
                    let d = accumulate(&mut grads[gain.0], dcols);
                    for (gr, hr) in g.chunks(dcols).zip(xhat.chunks(dcols)) {
                        for j in 0..dcols {
                            d[j] += gr[j] * hr[j];
                        }
                    }
                }
                if wants(*bias) {
                    let d = accumulate(&mut grads[bias.0], dcols);
                    for gr in g.chunks(dcols) {
                        d.iter_mut().zip(gr).for_each(|(d, g)| *d += g);
                    }
                }
                if wants(*x) {
                    let n = dcols as f64;
                    let d = accumulate(&mut grads[x.0], g.len());
                    for (r, ((gr, hr), dr)) in g
                        .chunks(dcols)
                        .zip(xhat.chunks(dcols))
                        .zip(d.chunks_mut(dcols))
                        .enumerate()
                    {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..dcols {
                            let dh = gr[j] * gv[j];
                            s1 += dh;
                            s2 += dh * hr[j];
                        }
                        for j in 0..dcols {
                            let dh = gr[j] * gv[j];
                            dr[j] += inv_std[r] / n * (n * dh - s1 - hr[j] * s2);
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let vocab = val(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                let d = accumulate(&mut grads[logits.0], probs.len());
                for (r, &y) in targets.iter().enumerate() {
                    for j in 0..vocab {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        d[r * vocab + j] += scale * (probs[r * vocab + j] - onehot);
                    }
                }
            }
            Op::Gather { table, ids } => {
                let cols = val(*table).cols();
                let d = accumulate(&mut grads[table.0], val(*table).numel());
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..cols {
                        d[id * cols + j] += g[r * cols + j];
                    }
                }
            }
            Op::Block { x, row0, col0 } => {
                let xc = val(*x).shape()[1];
                let (rows, cols) = (node.value.shape()[0], node.value.shape()[1]);
                let d = accumulate(&mut grads[x.0], val(*x).numel());
                for r in 0..rows {
                    let dst = &mut d[(row0 + r) * xc + col0..(row0 + r) * xc + col0 + cols];
                    dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(d, g)| *d += g);
                }
            }
            Op::Stitch { parts } => {
                let cols = node.value.shape()[1];
                for &(p, r0, c0) in parts {
                    if !wants(p) {
                        continue;
                    }
                    let (pr, pc) = (val(p).shape()[0], val(p).shape()[1]);
                    let d = accumulate(&mut grads[p.0], pr * pc);
                    for r in 0..pr {
                        let src = &g[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + pc];
                        d[r * pc..(r + 1) * pc].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sum(x) => {
                let d = accumulate(&mut grads[x.0], val(*x).numel());
                d.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Pick { x, index } => {
                let d = accumulate(&mut grads[x.0], val(*x).numel());
                d[*index] += g[0];
            }
            Op::Dropout { x, mask } => {
                let d = accumulate(&mut grads[x.0], g.len());
                for k in 0..g.len() {
                    d[k] += g[k] * mask[k];
                }
            }
        }
    }

    /// Adds the gradients of every parameter leaf reached by the last
    /// [`Tape::backward`] into `store`. Unreached parameters are untouched.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Some(id), Some(g)) = (node.param, grad) {
                store
                    .get_mut(id)
                    .grad
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, g)| *d += g);
            }
        }
    }
}
