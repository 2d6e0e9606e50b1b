//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and `backward` is a single reverse sweep.

use std::collections::{BTreeMap, HashMap};

use super::tensor::{matmul, matmul_at, matmul_bt};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug)]
enum Op<T> {
    Constant,
    Param,
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Sum(NodeId),
    Gelu(NodeId),
    Tanh(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    MaskedSoftmax(NodeId, usize),
    Embedding(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    MaskRows(NodeId, usize),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients of a scalar loss with respect to every parameter registered on
/// the graph. Parameters never reached by the loss get zeros.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T> {
    grads: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Sums another gradient set into this one.
    pub fn accumulate(&mut self, other: Gradients<T>) {
        for (id, g) in other.grads {
            match self.grads.get_mut(&id) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    self.grads.insert(id, g);
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.grads.values_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, NodeId>,
}

fn check_finite<T: Scalar>(op: &'static str, data: &[T]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<NodeId> {
        check_finite(op_name, value.data())?;
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push("constant", value, Op::Constant)
    }

    /// Registers a trainable tensor; repeated calls with the same id return
    /// the same node.
    pub fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Result<NodeId> {
        if let Some(&node) = self.params.get(&id) {
            return Ok(node);
        }
        let node = self.push("param", value.clone(), Op::Param)?;
        self.params.insert(id, node);
        Ok(node)
    }

    fn mat(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(id) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::ShapeMismatch {
                op,
                left: s.to_vec(),
                right: vec![0, 0],
            }),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.mat(a, "matmul")?;
        let (k2, n) = self.mat(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// `a @ b^T`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.mat(a, "matmul_bt")?;
        let (n, k2) = self.mat(b, "matmul_bt")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_bt",
                left: vec![m, k],
                right: vec![n, k2],
            });
        }
        let out = matmul_bt(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul_bt", Tensor::from_parts(vec![m, n], out), Op::MatMulBt(a, b))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = va.shape().to_vec();
        self.push("add", Tensor::from_parts(shape, data), Op::Add(a, b))
    }

    /// Adds a length-`n` vector to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.mat(a, "add_row")?;
        if self.value(bias).numel() != n {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: vec![m, n],
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let data = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        self.push("add_row", Tensor::from_parts(vec![m, n], data), Op::AddRow(a, bias))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = va.shape().to_vec();
        self.push("mul", Tensor::from_parts(shape, data), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: T) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * factor);
        self.push("scale", v, Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let c = T::of(GELU_C);
        let k = T::of(GELU_K);
        let half = T::of(0.5);
        let v = self
            .value(a)
            .map(|x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()));
        self.push("gelu", v, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.tanh());
        self.push("tanh", v, Op::Tanh(a))
    }

    /// Row-wise normalization followed by `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (m, n) = self.mat(x, "layer_norm")?;
        for p in [gamma, beta] {
            if self.value(p).numel() != n {
                return Err(Error::ShapeMismatch {
                    op: "layer_norm",
                    left: vec![m, n],
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let eps = T::of(LAYER_NORM_EPS);
        let nf = T::of(n as f64);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for row in self.value(x).data().chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        self.push(
            "layer_norm",
            Tensor::from_parts(vec![m, n], out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Row-wise softmax over the first `valid` columns; the remaining
    /// columns get exactly zero weight.
    pub fn masked_softmax(&mut self, a: NodeId, valid: usize) -> Result<NodeId> {
        let (m, n) = self.mat(a, "masked_softmax")?;
        if valid == 0 || valid > n {
            return Err(Error::InvalidTensor(format!("softmax over {valid} of {n} columns")));
        }
        let mut out = vec![T::zero(); m * n];
        for (i, row) in self.value(a).data().chunks(n).enumerate() {
            let live = &row[..valid];
            let max = live.iter().copied().fold(T::neg_infinity(), T::max);
            let orow = &mut out[i * n..i * n + valid];
            let mut total = T::zero();
            for (o, &v) in orow.iter_mut().zip(live) {
                *o = (v - max).exp();
                total += *o;
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        self.push(
            "softmax",
            Tensor::from_parts(vec![m, n], out),
            Op::MaskedSoftmax(a, valid),
        )
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (_, n) = self.mat(a, "softmax")?;
        self.masked_softmax(a, n)
    }

    /// Gathers rows of `table` by id.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize], name: &str) -> Result<NodeId> {
        let (rows, d) = self.mat(table, "embedding")?;
        if ids.is_empty() {
            return Err(Error::InvalidTensor("embedding lookup of zero ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                table: name.to_string(),
                index: bad,
                size: rows,
            });
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(t.row(i));
        }
        self.push(
            "embedding",
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::Embedding(table, ids.to_vec()),
        )
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let (m, n) = self.mat(a, "gather_rows")?;
        if rows.is_empty() {
            return Err(Error::InvalidTensor("gather of zero rows".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(Error::IndexOutOfRange {
                table: "gather_rows".into(),
                index: bad,
                size: m,
            });
        }
        let v = self.value(a);
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            out.extend_from_slice(v.row(r));
        }
        self.push(
            "gather_rows",
            Tensor::from_parts(vec![rows.len(), n], out),
            Op::GatherRows(a, rows.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.mat(a, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: vec![m, n],
                right: vec![start, len],
            });
        }
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        self.push(
            "slice_cols",
            Tensor::from_parts(vec![m, len], out),
            Op::SliceCols(a, start),
        )
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of zero parts".into()))?;
        let (m, _) = self.mat(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.mat(p, "concat_cols")?;
            if r != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: vec![r, c],
                });
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(
            "concat_cols",
            Tensor::from_parts(vec![m, n], out),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Zeroes every row at index `keep` and beyond.
    pub fn mask_rows(&mut self, a: NodeId, keep: usize) -> Result<NodeId> {
        let (m, n) = self.mat(a, "mask_rows")?;
        let mut out = self.value(a).data().to_vec();
        for v in out.iter_mut().skip(keep.min(m) * n) {
            *v = T::zero();
        }
        self.push("mask_rows", Tensor::from_parts(vec![m, n], out), Op::MaskRows(a, keep))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits[rows, classes]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (m, c) = match self.shape(logits) {
            [c] => (1, *c),
            [m, c] => (*m, *c),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "cross_entropy",
                    left: s.to_vec(),
                    right: vec![targets.len()],
                })
            }
        };
        if targets.len() != m {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: vec![m, c],
                right: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::IndexOutOfRange {
                table: "cross_entropy classes".into(),
                index: bad,
                size: c,
            });
        }
        let mut probs = Vec::with_capacity(m * c);
        let mut loss = T::zero();
        for (row, &t) in self.value(logits).data().chunks(c).zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss += lse - row[t];
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        loss /= T::of(m as f64);
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let n = self.dims(*b).1;
                    let da = matmul_bt(&g, self.value(*b).data(), m, n, k);
                    let db = matmul_at(self.value(*a).data(), &g, m, k, n);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulBt(a, b) => {
                    let (m, k) = self.dims(*a);
                    let n = self.dims(*b).0;
                    let da = matmul(&g, self.value(*b).data(), m, n, k);
                    let db = matmul_at(&g, self.value(*a).data(), m, n, k);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(a, bias) => {
                    let n = self.value(*bias).numel();
                    let mut db = vec![T::zero(); n];
                    for row in g.chunks(n) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *bias, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let va = self.value(*a).data();
                    let vb = self.value(*b).data();
                    let da = g.iter().zip(vb).map(|(&d, &y)| d * y).collect();
                    let db = g.iter().zip(va).map(|(&d, &x)| d * x).collect();
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads, *a, g.iter().map(|&d| d * *f).collect());
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Gelu(a) => {
                    let c = T::of(GELU_C);
                    let k = T::of(GELU_K);
                    let half = T::of(0.5);
                    let three = T::of(3.0);
                    let da = self
                        .value(*a)
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&x, &d)| {
                            let t = (c * (x + k * x * x * x)).tanh();
                            let dt = (T::one() - t * t) * c * (T::one() + three * k * x * x);
                            d * (half * (T::one() + t) + half * x * dt)
                        })
                        .collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::Tanh(a) => {
                    let da = node
                        .value
                        .data()
                        .iter()
                        .zip(&g)
                        .map(|(&y, &d)| d * (T::one() - y * y))
                        .collect();
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (m, n) = self.dims(*x);
                    let gm = self.value(*gamma).data();
                    let nf = T::of(n as f64);
                    let mut dx = vec![T::zero(); m * n];
                    let mut dg = vec![T::zero(); n];
                    let mut db = vec![T::zero(); n];
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let mut sum_dh = T::zero();
                        let mut sum_dh_h = T::zero();
                        for j in 0..n {
                            let dh = gr[j] * gm[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[j];
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                        let scale = inv_std[r] / nf;
                        for j in 0..n {
                            let dh = gr[j] * gm[j];
                            dx[r * n + j] = scale * (nf * dh - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dg);
                    accumulate(&mut grads, *beta, db);
                }
                Op::MaskedSoftmax(a, valid) => {
                    let (m, n) = self.dims(*a);
                    let y = node.value.data();
                    let mut da = vec![T::zero(); m * n];
                    for r in 0..m {
                        let yr = &y[r * n..r * n + valid];
                        let gr = &g[r * n..r * n + valid];
                        let dot: T = yr.iter().zip(gr).map(|(&p, &d)| p * d).sum();
                        for j in 0..*valid {
                            da[r * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Embedding(table, ids) | Op::GatherRows(table, ids) => {
                    let (rows, d) = self.dims(*table);
                    let mut dt = vec![T::zero(); rows * d];
                    for (k, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[k * d + j];
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::SliceCols(a, start) => {
                    let (m, n) = self.dims(*a);
                    let len = node.value.dims2().1;
                    let mut da = vec![T::zero(); m * n];
                    for r in 0..m {
                        da[r * n + start..r * n + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = node.value.dims2();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.dims(p).1;
                        let mut dp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            dp.extend_from_slice(&g[r * n + offset..r * n + offset + w]);
                        }
                        accumulate(&mut grads, p, dp);
                        offset += w;
                    }
                }
                Op::MaskRows(a, keep) => {
                    let (m, n) = self.dims(*a);
                    let mut da = g;
                    for v in da.iter_mut().skip((*keep).min(m) * n) {
                        *v = T::zero();
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let c = probs.len() / targets.len();
                    let scale = g[0] / T::of(targets.len() as f64);
                    let mut dl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        dl[r * c + t] -= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }

        let mut out = BTreeMap::new();
        for (&pid, &node) in &self.params {
            let shape = self.shape(node).to_vec();
            let data = grads
                .get_mut(node.0)
                .and_then(Option::take)
                .unwrap_or_else(|| vec![T::zero(); shape.iter().product()]);
            check_finite("backward", &data)?;
            out.insert(pid, Tensor::from_parts(shape, data));
        }
        Ok(Gradients { grads: out })
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        self.value(id).dims2()
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, g: Vec<T>) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}
