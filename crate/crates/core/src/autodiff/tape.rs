//! Wengert-list reverse-mode differentiation over dense tensors.
//!
//! Every operation appends a node holding its forward value and enough
//! context to push an adjoint back to its inputs. Node indices are
//! topologically ordered by construction, so `backward` is a single reverse
//! sweep.

use std::sync::Arc;

use rand::Rng;
use statrs::function::erf::erf;

use super::sparse::SparseMatrix;
use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Lower and upper clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
    Sigmoid,
    SoftmaxRows,
}

/// Running statistics and hyperparameters of one batch-normalisation layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormStats {
    pub fn new(features: usize) -> Self {
        BatchNormStats {
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    BatchNorm { x: Var, inv_std: Vec<f64>, batch_stats: bool },
    Dropout { x: Var, mask: Vec<f64> },
    Conv1d { x: Var, w: Var, b: Var },
    GlobalMaxPool { x: Var, argmax: Vec<usize> },
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    PairBce { p: Var, pos: Vec<(usize, usize)>, neg: Vec<(usize, usize)> },
    CrossEntropySum { p: Var, target: Tensor },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::SpMM(..) => "sparse_matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Sigmoid(..) => "sigmoid",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Dropout { .. } => "dropout",
            Op::Conv1d { .. } => "conv1d",
            Op::GlobalMaxPool { .. } => "global_max_pool",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::PairBce { .. } => "pair_bce",
            Op::CrossEntropySum { .. } => "cross_entropy_sum",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Records operations for one forward pass and runs the matching backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let g = slot.get_or_insert_with(|| Tensor::zeros(shape));
    f(g.data_mut());
}

/// Like `accumulate` on `v`'s grad, while the closure can still read every node's value.
fn accumulate_reading(nodes: &mut [Node], v: Var, f: impl FnOnce(&[Node], &mut [f64])) {
    let mut g = match nodes[v.0].grad.take() {
        Some(g) => g,
        None => Tensor::zeros(nodes[v.0].value.shape()),
    };
    f(nodes, g.data_mut());
    nodes[v.0].grad = Some(g);
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Names of recorded operations in execution order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().map(|n| n.op.name()).collect()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `s · d` with `s` treated as a constant operator.
    pub fn sparse_matmul(&mut self, s: Arc<SparseMatrix>, d: Var) -> Result<Var> {
        let value = s.matmul_dense(self.value(d))?;
        let rg = self.needs(&[d]);
        Ok(self.push(value, Op::SpMM(s, d), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        for (o, &y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Sums any number of equally shaped tensors.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (first, rest) = vars
            .split_first()
            .ok_or_else(|| Error::contract("add_all needs at least one input"))?;
        rest.iter().try_fold(*first, |acc, &v| self.add(acc, v))
    }

    fn row_operand(&self, a: Var, row: Var, what: &str) -> Result<(usize, usize)> {
        let (m, n) = self.value(a).dims2()?;
        let ok = match self.shape(row) {
            [len] => *len == n,
            [1, len] => *len == n,
            _ => false,
        };
        if !ok {
            return Err(Error::shape(format!(
                "{what}: row operand {:?} does not match {:?}",
                self.shape(row),
                self.shape(a)
            )));
        }
        Ok((m, n))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.row_operand(a, row, "add_row")?;
        let mut value = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                value.data_mut()[i * n + j] += r[j];
            }
        }
        let rg = self.needs(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// Multiplies every row of an `m×n` matrix elementwise by a length-`n` vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.row_operand(a, row, "mul_row")?;
        let mut value = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..m {
            for j in 0..n {
                value.data_mut()[i * n + j] *= r[j];
            }
        }
        let rg = self.needs(&[a, row]);
        Ok(self.push(value, Op::MulRow(a, row), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut value = self.value(a).clone();
        for (o, &y) in value.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= y;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// Sum of all entries as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => Ok(self.relu(x)),
            Activation::Gelu => Ok(self.gelu(x)),
            Activation::Sigmoid => Ok(self.sigmoid(x)),
            Activation::SoftmaxRows => self.softmax_rows(x),
        }
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        let rg = self.needs(&[x]);
        self.push(value, Op::Gelu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        let rg = self.needs(&[x]);
        self.push(value, Op::Sigmoid(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(n.max(1)).take(m) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::SoftmaxRows(x), rg))
    }

    /// Per-feature standardisation of a `b×f` batch (no affine part).
    ///
    /// Train mode normalises with the batch statistics and folds them into the
    /// running averages; eval mode uses the running averages.
    pub fn batchnorm(&mut self, x: Var, stats: &mut BatchNormStats, mode: Mode) -> Result<Var> {
        let (b, f) = self.value(x).dims2()?;
        if stats.running_mean.len() != f {
            return Err(Error::shape(format!(
                "batchnorm has {} features, input has {f}",
                stats.running_mean.len()
            )));
        }
        let xs = self.value(x).data();
        let (mean, var) = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(Error::contract(
                        "batchnorm in train mode needs at least 2 rows (variance undefined)",
                    ));
                }
                let mut mean = vec![0.0; f];
                let mut var = vec![0.0; f];
                for i in 0..b {
                    for j in 0..f {
                        mean[j] += xs[i * f + j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                for i in 0..b {
                    for j in 0..f {
                        let d = xs[i * f + j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= b as f64);
                let unbias = b as f64 / (b as f64 - 1.0);
                for j in 0..f {
                    stats.running_mean[j] =
                        (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mean[j];
                    stats.running_var[j] = (1.0 - stats.momentum) * stats.running_var[j]
                        + stats.momentum * var[j] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (stats.running_mean.clone(), stats.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
        let mut out = vec![0.0; b * f];
        for i in 0..b {
            for j in 0..f {
                out[i * f + j] = (xs[i * f + j] - mean[j]) * inv_std[j];
            }
        }
        let value = Tensor::new(vec![b, f], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
            rg,
        ))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`; eval mode is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut value = self.value(x).clone();
        for (v, m) in value.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Valid, stride-1 cross-correlation.
    ///
    /// `x: [batch, c_in, len]`, `w: [c_out, c_in, k]`, `b: [c_out]` → `[batch, c_out, len - k + 1]`.
    /// Zero input entries are skipped, which makes one-hot inputs cheap.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, c_in, len) = match self.shape(x) {
            &[bt, c, l] => (bt, c, l),
            s => return Err(Error::shape(format!("conv1d input must be rank 3, got {s:?}"))),
        };
        let (c_out, k) = match self.shape(w) {
            &[o, c, k] if c == c_in => (o, k),
            s => {
                return Err(Error::shape(format!(
                    "conv1d kernel {s:?} incompatible with {c_in} input channels"
                )))
            }
        };
        if self.shape(b) != [c_out] {
            return Err(Error::shape(format!(
                "conv1d bias {:?} should be [{c_out}]",
                self.shape(b)
            )));
        }
        if len < k {
            return Err(Error::shape(format!(
                "conv1d input length {len} shorter than kernel size {k}"
            )));
        }
        let out_len = len - k + 1;
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let bs = self.value(b).data();
        let mut out = vec![0.0; batch * c_out * out_len];
        for bi in 0..batch {
            for o in 0..c_out {
                out[(bi * c_out + o) * out_len..(bi * c_out + o + 1) * out_len].fill(bs[o]);
            }
            for c in 0..c_in {
                let x_row = &xs[(bi * c_in + c) * len..(bi * c_in + c + 1) * len];
                for (s, &xv) in x_row.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let t_lo = s.saturating_sub(k - 1);
                    let t_hi = s.min(out_len - 1);
                    if t_lo > t_hi {
                        continue;
                    }
                    for o in 0..c_out {
                        let w_row = &ws[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                        let base = (bi * c_out + o) * out_len;
                        for t in t_lo..=t_hi {
                            out[base + t] += w_row[s - t] * xv;
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch, c_out, out_len], out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Conv1d { x, w, b }, rg))
    }

    /// `[batch, c, len]` → `[batch, c]`, taking the maximum along the last axis.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (batch, c, len) = match self.shape(x) {
            &[bt, c, l] if l > 0 => (bt, c, l),
            s => return Err(Error::shape(format!("max pool needs [batch, c, len>0], got {s:?}"))),
        };
        let xs = self.value(x).data();
        let mut out = vec![0.0; batch * c];
        let mut argmax = vec![0; batch * c];
        for (row, (o, a)) in out.iter_mut().zip(argmax.iter_mut()).enumerate() {
            let slice = &xs[row * len..(row + 1) * len];
            let mut best = 0;
            for (t, &v) in slice.iter().enumerate() {
                if v > slice[best] {
                    best = t;
                }
            }
            *o = slice[best];
            *a = row * len + best;
        }
        let value = Tensor::new(vec![batch, c], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::GlobalMaxPool { x, argmax }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols needs at least one input"));
        }
        let m = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != m {
                return Err(Error::shape(format!(
                    "concat_cols row counts differ: {m} vs {r}"
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::new(vec![m, total], out)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows needs at least one input"));
        }
        let n = self.value(parts[0]).dims2()?.1;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if c != n {
                return Err(Error::shape(format!(
                    "concat_rows column counts differ: {n} vs {c}"
                )));
            }
            rows += r;
        }
        let mut out = Vec::with_capacity(rows * n);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::new(vec![rows, n], out)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Selects rows (with repetition) of a matrix.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::shape(format!("gather_rows index {bad} out of {m} rows")));
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(self.value(a).row(i));
        }
        let value = Tensor::new(vec![idx.len(), n], out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec()), rg))
    }

    /// Mean binary cross-entropy over selected entries of a probability matrix:
    /// positives contribute `-ln p[k][q]`, negatives `-ln(1 - p[k][q])`.
    /// With no selected entries the result is a constant zero.
    pub fn pair_bce(&mut self, p: Var, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<Var> {
        let (m, n) = self.value(p).dims2()?;
        if let Some(&(k, q)) = pos.iter().chain(neg).find(|&&(k, q)| k >= m || q >= n) {
            return Err(Error::shape(format!("pair ({k}, {q}) outside {m}x{n}")));
        }
        let total = pos.len() + neg.len();
        if total == 0 {
            return Ok(self.constant(Tensor::scalar(0.0)));
        }
        let pv = self.value(p);
        let clamp = |v: f64| v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let mut acc = 0.0;
        for &(k, q) in pos {
            acc -= clamp(pv.at(k, q)).ln();
        }
        for &(k, q) in neg {
            acc -= (1.0 - clamp(pv.at(k, q))).ln();
        }
        let value = Tensor::scalar(acc / total as f64);
        let rg = self.needs(&[p]);
        Ok(self.push(
            value,
            Op::PairBce {
                p,
                pos: pos.to_vec(),
                neg: neg.to_vec(),
            },
            rg,
        ))
    }

    /// `-Σ target ⊙ ln(clamp(p))`, summed over every entry.
    pub fn cross_entropy_sum(&mut self, p: Var, target: &Tensor) -> Result<Var> {
        if self.shape(p) != target.shape() {
            return Err(Error::shape(format!(
                "cross entropy: predictions {:?} vs targets {:?}",
                self.shape(p),
                target.shape()
            )));
        }
        let acc: f64 = self
            .value(p)
            .data()
            .iter()
            .zip(target.data())
            .filter(|(_, &t)| t != 0.0)
            .map(|(&v, &t)| -t * v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
            .sum();
        let rg = self.needs(&[p]);
        Ok(self.push(
            Tensor::scalar(acc),
            Op::CrossEntropySum {
                p,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Populates gradients of the scalar `loss` for every node that requires them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let shape = self.shape(loss).to_vec();
        self.nodes[loss.0].grad = Some(Tensor::full(&shape, 1.0));

        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.as_ref() else {
                continue;
            };
            backprop(&node.op, &node.value, g, before);
        }
        Ok(())
    }
}

/// Pushes the adjoint `g` of one node into the grads of its inputs.
fn backprop(op: &Op, out: &Tensor, g: &Tensor, nodes: &mut [Node]) {
    let gd = g.data();
    let wants = |nodes: &[Node], v: Var| nodes[v.0].requires_grad;
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let n = nodes[b.0].value.shape()[1];
            if wants(nodes, *a) {
                // dA = G · Bᵀ
                accumulate_reading(nodes, *a, |nodes, ga| {
                    matmul_nt_into(gd, nodes[b.0].value.data(), ga, m, n, k)
                });
            }
            if wants(nodes, *b) {
                // dB = Aᵀ · G
                accumulate_reading(nodes, *b, |nodes, gb| {
                    matmul_tn_into(nodes[a.0].value.data(), gd, gb, m, k, n)
                });
            }
        }
        Op::SpMM(s, d) => {
            if wants(nodes, *d) {
                let contrib = s.transpose().matmul_dense(g).expect("shapes checked forward");
                let shape = nodes[d.0].value.shape().to_vec();
                accumulate(&mut nodes[d.0].grad, &shape, |gs| {
                    gs.iter_mut().zip(contrib.data()).for_each(|(o, c)| *o += c)
                });
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if wants(nodes, *v) {
                    accumulate(&mut nodes[v.0].grad, out.shape(), |gv| {
                        gv.iter_mut().zip(gd).for_each(|(o, c)| *o += c)
                    });
                }
            }
        }
        Op::AddRow(a, row) => {
            if wants(nodes, *a) {
                accumulate(&mut nodes[a.0].grad, out.shape(), |ga| {
                    ga.iter_mut().zip(gd).for_each(|(o, c)| *o += c)
                });
            }
            if wants(nodes, *row) {
                let n = out.shape()[1];
                let shape = nodes[row.0].value.shape().to_vec();
                accumulate(&mut nodes[row.0].grad, &shape, |gr| {
                    for chunk in gd.chunks(n) {
                        gr.iter_mut().zip(chunk).for_each(|(o, c)| *o += c);
                    }
                });
            }
        }
        Op::MulRow(a, row) => {
            let n = out.shape()[1];
            if wants(nodes, *a) {
                accumulate_reading(nodes, *a, |nodes, ga| {
                    let rv = nodes[row.0].value.data();
                    for (i, (o, c)) in ga.iter_mut().zip(gd).enumerate() {
                        *o += c * rv[i % n];
                    }
                });
            }
            if wants(nodes, *row) {
                accumulate_reading(nodes, *row, |nodes, gr| {
                    let av = nodes[a.0].value.data();
                    for (i, c) in gd.iter().enumerate() {
                        gr[i % n] += c * av[i];
                    }
                });
            }
        }
        Op::Mul(a, b) => {
            if wants(nodes, *a) {
                accumulate_reading(nodes, *a, |nodes, ga| {
                    let bv = nodes[b.0].value.data();
                    for i in 0..ga.len() {
                        ga[i] += gd[i] * bv[i];
                    }
                });
            }
            if wants(nodes, *b) {
                accumulate_reading(nodes, *b, |nodes, gb| {
                    let av = nodes[a.0].value.data();
                    for i in 0..gb.len() {
                        gb[i] += gd[i] * av[i];
                    }
                });
            }
        }
        Op::Scale(a, c) => {
            if wants(nodes, *a) {
                accumulate(&mut nodes[a.0].grad, out.shape(), |ga| {
                    ga.iter_mut().zip(gd).for_each(|(o, v)| *o += c * v)
                });
            }
        }
        Op::Sum(a) => {
            if wants(nodes, *a) {
                let shape = nodes[a.0].value.shape().to_vec();
                accumulate(&mut nodes[a.0].grad, &shape, |ga| {
                    ga.iter_mut().for_each(|o| *o += gd[0])
                });
            }
        }
        Op::Relu(x) => {
            if wants(nodes, *x) {
                accumulate(&mut nodes[x.0].grad, out.shape(), |gx| {
                    for i in 0..gx.len() {
                        if out.data()[i] > 0.0 {
                            gx[i] += gd[i];
                        }
                    }
                });
            }
        }
        Op::Gelu(x) => {
            if wants(nodes, *x) {
                accumulate_reading(nodes, *x, |nodes, gx| {
                    let xv = nodes[x.0].value.data();
                    for i in 0..gx.len() {
                        gx[i] += gd[i] * gelu_grad(xv[i]);
                    }
                });
            }
        }
        Op::Sigmoid(x) => {
            if wants(nodes, *x) {
                accumulate(&mut nodes[x.0].grad, out.shape(), |gx| {
                    for (i, &y) in out.data().iter().enumerate() {
                        gx[i] += gd[i] * y * (1.0 - y);
                    }
                });
            }
        }
        Op::SoftmaxRows(x) => {
            if wants(nodes, *x) {
                let n = out.shape()[1];
                accumulate(&mut nodes[x.0].grad, out.shape(), |gx| {
                    for ((grow, yrow), gout) in gx
                        .chunks_mut(n)
                        .zip(out.data().chunks(n))
                        .zip(gd.chunks(n))
                    {
                        let dot: f64 = yrow.iter().zip(gout).map(|(y, g)| y * g).sum();
                        for j in 0..n {
                            grow[j] += yrow[j] * (gout[j] - dot);
                        }
                    }
                });
            }
        }
        Op::BatchNorm { x, inv_std, batch_stats } => {
            if wants(nodes, *x) {
                let (b, f) = (out.shape()[0], out.shape()[1]);
                let xhat = out.data();
                accumulate(&mut nodes[x.0].grad, out.shape(), |gx| {
                    if *batch_stats {
                        let mut sum_g = vec![0.0; f];
                        let mut sum_gx = vec![0.0; f];
                        for i in 0..b {
                            for j in 0..f {
                                sum_g[j] += gd[i * f + j];
                                sum_gx[j] += gd[i * f + j] * xhat[i * f + j];
                            }
                        }
                        let bn = b as f64;
                        for i in 0..b {
                            for j in 0..f {
                                let idx = i * f + j;
                                gx[idx] += inv_std[j] / bn
                                    * (bn * gd[idx] - sum_g[j] - xhat[idx] * sum_gx[j]);
                            }
                        }
                    } else {
                        for i in 0..b {
                            for j in 0..f {
                                gx[i * f + j] += gd[i * f + j] * inv_std[j];
                            }
                        }
                    }
                });
            }
        }
        Op::Dropout { x, mask } => {
            if wants(nodes, *x) {
                accumulate(&mut nodes[x.0].grad, out.shape(), |gx| {
                    for i in 0..gx.len() {
                        gx[i] += gd[i] * mask[i];
                    }
                });
            }
        }
        Op::Conv1d { x, w, b } => {
            let (batch, c_out, out_len) = (out.shape()[0], out.shape()[1], out.shape()[2]);
            let (c_in, len) = (nodes[x.0].value.shape()[1], nodes[x.0].value.shape()[2]);
            let k = nodes[w.0].value.shape()[2];
            if wants(nodes, *b) {
                accumulate(&mut nodes[b.0].grad, &[c_out], |gb| {
                    for bi in 0..batch {
                        for (o, slot) in gb.iter_mut().enumerate() {
                            let base = (bi * c_out + o) * out_len;
                            *slot += gd[base..base + out_len].iter().sum::<f64>();
                        }
                    }
                });
            }
            if wants(nodes, *w) {
                accumulate_reading(nodes, *w, |nodes, gw| {
                    let xs = nodes[x.0].value.data();
                    for bi in 0..batch {
                        for c in 0..c_in {
                            let x_row = &xs[(bi * c_in + c) * len..(bi * c_in + c + 1) * len];
                            for (s, &xval) in x_row.iter().enumerate() {
                                if xval == 0.0 {
                                    continue;
                                }
                                let t_lo = s.saturating_sub(k - 1);
                                let t_hi = s.min(out_len - 1);
                                if t_lo > t_hi {
                                    continue;
                                }
                                for o in 0..c_out {
                                    let base = (bi * c_out + o) * out_len;
                                    let wbase = (o * c_in + c) * k;
                                    for t in t_lo..=t_hi {
                                        gw[wbase + s - t] += gd[base + t] * xval;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            if wants(nodes, *x) {
                accumulate_reading(nodes, *x, |nodes, gx| {
                    let ws = nodes[w.0].value.data();
                    for bi in 0..batch {
                        for o in 0..c_out {
                            let gout = &gd[(bi * c_out + o) * out_len..(bi * c_out + o + 1) * out_len];
                            for c in 0..c_in {
                                let w_row = &ws[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                                let gx_row = &mut gx[(bi * c_in + c) * len..(bi * c_in + c + 1) * len];
                                for (t, &gv) in gout.iter().enumerate() {
                                    if gv == 0.0 {
                                        continue;
                                    }
                                    for (j, &wj) in w_row.iter().enumerate() {
                                        gx_row[t + j] += gv * wj;
                                    }
                                }
                            }
                        }
                    }
                });
            }
        }
        Op::GlobalMaxPool { x, argmax } => {
            if wants(nodes, *x) {
                let shape = nodes[x.0].value.shape().to_vec();
                accumulate(&mut nodes[x.0].grad, &shape, |gx| {
                    for (slot, &src) in argmax.iter().enumerate() {
                        gx[src] += gd[slot];
                    }
                });
            }
        }
        Op::Transpose(a) => {
            if wants(nodes, *a) {
                let gt = g.transpose().expect("rank 2");
                let shape = nodes[a.0].value.shape().to_vec();
                accumulate(&mut nodes[a.0].grad, &shape, |ga| {
                    ga.iter_mut().zip(gt.data()).for_each(|(o, c)| *o += c)
                });
            }
        }
        Op::Reshape(a) => {
            if wants(nodes, *a) {
                let shape = nodes[a.0].value.shape().to_vec();
                accumulate(&mut nodes[a.0].grad, &shape, |ga| {
                    ga.iter_mut().zip(gd).for_each(|(o, c)| *o += c)
                });
            }
        }
        Op::ConcatCols(parts) => {
            let (m, total) = (out.shape()[0], out.shape()[1]);
            let mut offset = 0;
            for p in parts {
                let shape = nodes[p.0].value.shape().to_vec();
                let w = shape[1];
                if wants(nodes, *p) {
                    accumulate(&mut nodes[p.0].grad, &shape, |gp| {
                        for i in 0..m {
                            for j in 0..w {
                                gp[i * w + j] += gd[i * total + offset + j];
                            }
                        }
                    });
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let shape = nodes[p.0].value.shape().to_vec();
                let len = shape.iter().product::<usize>();
                if wants(nodes, *p) {
                    accumulate(&mut nodes[p.0].grad, &shape, |gp| {
                        gp.iter_mut()
                            .zip(&gd[offset..offset + len])
                            .for_each(|(o, c)| *o += c)
                    });
                }
                offset += len;
            }
        }
        Op::GatherRows(a, idx) => {
            if wants(nodes, *a) {
                let shape = nodes[a.0].value.shape().to_vec();
                let n = shape[1];
                accumulate(&mut nodes[a.0].grad, &shape, |ga| {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..n {
                            ga[src * n + j] += gd[r * n + j];
                        }
                    }
                });
            }
        }
        Op::PairBce { p, pos, neg } => {
            if wants(nodes, *p) {
                let n = nodes[p.0].value.shape()[1];
                let scale = gd[0] / (pos.len() + neg.len()) as f64;
                let inside = |v: f64| v > PROB_CLAMP && v < 1.0 - PROB_CLAMP;
                accumulate_reading(nodes, *p, |nodes, gp| {
                    let pv = &nodes[p.0].value;
                    for &(k, q) in pos {
                        let v = pv.at(k, q);
                        if inside(v) {
                            gp[k * n + q] -= scale / v;
                        }
                    }
                    for &(k, q) in neg {
                        let v = pv.at(k, q);
                        if inside(v) {
                            gp[k * n + q] += scale / (1.0 - v);
                        }
                    }
                });
            }
        }
        Op::CrossEntropySum { p, target } => {
            if wants(nodes, *p) {
                accumulate_reading(nodes, *p, |nodes, gp| {
                    let pv = nodes[p.0].value.data();
                    for (i, (&v, &t)) in pv.iter().zip(target.data()).enumerate() {
                        if t != 0.0 && v > PROB_CLAMP && v < 1.0 - PROB_CLAMP {
                            gp[i] -= gd[0] * t / v;
                        }
                    }
                });
            }
        }
    }
}
