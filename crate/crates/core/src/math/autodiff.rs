//! Tape-based reverse-mode automatic differentiation over a fixed set of
//! tensor primitives.
//!
//! A [`Graph`] records every primitive applied during a forward pass together
//! with the values its reverse rule needs. [`Graph::backward`] walks the tape
//! in reverse and returns gradients for every leaf created with
//! [`Graph::param`]. Nodes created with [`Graph::constant`] never receive
//! gradients, and any subgraph depending only on constants is skipped in the
//! reverse pass.

use crate::error::{Error, Result};
use crate::math::tensor::{gemm, gemm_nt, gemm_tn, Tensor};

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Batched product over a leading batch dimension; `b` is transposed in
    /// its last two dimensions when `transpose_b` is set.
    BatchMatMul {
        a: NodeId,
        b: NodeId,
        transpose_b: bool,
    },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRowBias(NodeId, NodeId),
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Gelu(NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    SliceRows {
        x: NodeId,
        start: usize,
    },
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    RepeatRows {
        x: NodeId,
        times: usize,
    },
    TileRows {
        x: NodeId,
        times: usize,
    },
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    trainable: bool,
}

/// The computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the trainable leaves.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` if the leaf is not trainable. Trainable
    /// leaves the loss does not depend on get a zero tensor.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad, trainable: false });
        NodeId(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true, trainable: true });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false, trainable: false });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// Batched matrix product of `[batch, m, k]` by `[batch, k, n]` (or by
    /// `[batch, n, k]` transposed).
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId, transpose_b: bool) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::dim("batch_matmul", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if transpose_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(Error::dim("batch_matmul", sa, sb));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let a_i = &da[i * m * k..(i + 1) * m * k];
            let b_i = &db[i * k * n..(i + 1) * k * n];
            let o_i = &mut out[i * m * n..(i + 1) * m * n];
            if transpose_b {
                gemm_nt(a_i, b_i, o_i, m, k, n);
            } else {
                gemm(a_i, b_i, o_i, m, k, n);
            }
        }
        let value = Tensor::new([batch, m, n], out)?;
        Ok(self.push(value, Op::BatchMatMul { a, b, transpose_b }, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    /// Adds a `[1 x n]` (or `[n]`) bias to every row of `x`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let n = xv.cols();
        if bv.numel() != n {
            return Err(Error::dim("add_row_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        if n > 0 {
            for row in out.data_mut().chunks_mut(n) {
                for (o, b) in row.iter_mut().zip(bv.data()) {
                    *o += b;
                }
            }
        }
        Ok(self.push(out, Op::AddRowBias(x, bias), &[x, bias]))
    }

    /// Softmax over the last dimension.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).softmax_rows();
        self.push(value, Op::Softmax(x), &[x])
    }

    /// Layer normalisation over the last dimension with elementwise gain and
    /// bias of length `cols`.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let (rows, cols) = rows_cols(xv);
        if gv.numel() != cols || bv.numel() != cols {
            return Err(Error::dim("layer_norm", xv.shape(), gv.shape()));
        }
        let mut normalized = xv.clone();
        let mut out = xv.clone();
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &xv.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for c in 0..cols {
                let nrm = (row[c] - mean) * inv;
                normalized.data_mut()[r * cols + c] = nrm;
                out.data_mut()[r * cols + c] = nrm * gv.data()[c] + bv.data()[c];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, normalized, inv_std }, &[x, gain, bias]))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()));
        self.push(value, Op::Gelu(x), &[x])
    }

    /// Columns `start..start + len` of a 2-D view.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = rows_cols(xv);
        if start + len > cols {
            return Err(Error::dim("slice_cols", xv.shape(), &[start, len]));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new([rows, len], out)?;
        Ok(self.push(value, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts
            .first()
            .map(|p| self.value(*p).rows())
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let mut total = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != rows {
                return Err(Error::dim("concat_cols", self.value(parts[0]).shape(), v.shape()));
            }
            total += v.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::new([rows, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Rows `start..start + len` of a 2-D view.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = rows_cols(xv);
        if start + len > rows {
            return Err(Error::dim("slice_rows", xv.shape(), &[start, len]));
        }
        let value = Tensor::new([len, cols], xv.data()[start * cols..(start + len) * cols].to_vec())?;
        Ok(self.push(value, Op::SliceRows { x, start }, &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = parts
            .first()
            .map(|p| self.value(*p).cols())
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            if v.cols() != cols {
                return Err(Error::dim("concat_rows", self.value(parts[0]).shape(), v.shape()));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let value = Tensor::new([rows, cols], out)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Repeats every row `times` times consecutively: `[r x c] -> [r*times x c]`.
    pub fn repeat_rows(&mut self, x: NodeId, times: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = rows_cols(xv);
        let mut out = Vec::with_capacity(rows * cols * times);
        for r in 0..rows {
            for _ in 0..times {
                out.extend_from_slice(xv.row(r));
            }
        }
        let value = Tensor::new([rows * times, cols], out)?;
        Ok(self.push(value, Op::RepeatRows { x, times }, &[x]))
    }

    /// Stacks `times` copies of the whole matrix: `[r x c] -> [times*r x c]`.
    pub fn tile_rows(&mut self, x: NodeId, times: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = rows_cols(xv);
        let mut out = Vec::with_capacity(rows * cols * times);
        for _ in 0..times {
            out.extend_from_slice(xv.data());
        }
        let value = Tensor::new([rows * times, cols], out)?;
        Ok(self.push(value, Op::TileRows { x, times }, &[x]))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let value = Tensor::scalar(v.sum() / v.numel() as f64);
        self.push(value, Op::Mean(x), &[x])
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!("backward requires a scalar loss, got shape {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape().to_vec(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if node.trainable {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }

        // Trainable leaves the loss never touched still get a zero gradient.
        let out =
            self.nodes
                .iter()
                .zip(grads)
                .map(|(n, g)| {
                    if n.trainable {
                        Some(g.unwrap_or_else(|| Tensor::zeros(n.value.shape().to_vec())))
                    } else {
                        None
                    }
                })
                .collect();
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; m * k];
                    gemm_nt(g.data(), bv.data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; k * n];
                    gemm_tn(av.data(), g.data(), &mut db, k, m, n);
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = g.shape()[2];
                let need_a = self.nodes[a.0].needs_grad;
                let need_b = self.nodes[b.0].needs_grad;
                let mut da = vec![0.0; batch * m * k];
                let mut db = vec![0.0; batch * k * n];
                for i in 0..batch {
                    let g_i = &g.data()[i * m * n..(i + 1) * m * n];
                    let a_i = &av.data()[i * m * k..(i + 1) * m * k];
                    let b_i = &bv.data()[i * k * n..(i + 1) * k * n];
                    let da_i = &mut da[i * m * k..(i + 1) * m * k];
                    let db_i = &mut db[i * k * n..(i + 1) * k * n];
                    if *transpose_b {
                        // out = a b^T, b is [n x k]
                        if need_a {
                            gemm(g_i, b_i, da_i, m, n, k);
                        }
                        if need_b {
                            gemm_tn(g_i, a_i, db_i, n, m, k);
                        }
                    } else {
                        if need_a {
                            gemm_nt(g_i, b_i, da_i, m, n, k);
                        }
                        if need_b {
                            gemm_tn(a_i, g_i, db_i, k, m, n);
                        }
                    }
                }
                if need_a {
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), da)?);
                }
                if need_b {
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.mul(self.value(*b))?);
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, g.mul(self.value(*a))?);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.scale(*c)),
            Op::AddRowBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.nodes[bias.0].needs_grad {
                    let bv = self.value(*bias);
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let n = y.cols();
                let mut dx = vec![0.0; y.numel()];
                for ((yr, gr), dr) in y.data().chunks(n).zip(g.data().chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), dx)?);
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let (rows, cols) = rows_cols(normalized);
                let gv = self.value(*gain);
                if self.nodes[x.0].needs_grad {
                    let mut dx = vec![0.0; rows * cols];
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let nr = &normalized.data()[r * cols..(r + 1) * cols];
                        let mut mean_d = 0.0;
                        let mut mean_dn = 0.0;
                        for c in 0..cols {
                            dxhat[c] = gr[c] * gv.data()[c];
                            mean_d += dxhat[c];
                            mean_dn += dxhat[c] * nr[c];
                        }
                        mean_d /= cols as f64;
                        mean_dn /= cols as f64;
                        for c in 0..cols {
                            dx[r * cols + c] = inv_std[r] * (dxhat[c] - mean_d - nr[c] * mean_dn);
                        }
                    }
                    let xs = self.value(*x).shape().to_vec();
                    self.accumulate(grads, *x, Tensor::new(xs, dx)?);
                }
                if self.nodes[gain.0].needs_grad {
                    let mut dg = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            dg[c] += g.data()[r * cols + c] * normalized.data()[r * cols + c];
                        }
                    }
                    self.accumulate(grads, *gain, Tensor::new(gv.shape().to_vec(), dg)?);
                }
                if self.nodes[bias.0].needs_grad {
                    let mut db = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    let bs = self.value(*bias).shape().to_vec();
                    self.accumulate(grads, *bias, Tensor::new(bs, db)?);
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let dx = xv.zip_map(g, |v, gv| {
                    let th = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                    let d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                    d * gv
                });
                self.accumulate(grads, *x, dx);
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (rows, cols) = rows_cols(xv);
                let len = g.cols();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let rows = g.rows();
                for p in parts {
                    let pv = self.value(*p);
                    let w = pv.cols();
                    if self.nodes[p.0].needs_grad {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, *p, Tensor::new(pv.shape().to_vec(), dp)?);
                    }
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let cols = xv.cols();
                let mut dx = vec![0.0; xv.numel()];
                dx[start * cols..start * cols + g.numel()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let n = pv.numel();
                    if self.nodes[p.0].needs_grad {
                        let dp = g.data()[offset..offset + n].to_vec();
                        self.accumulate(grads, *p, Tensor::new(pv.shape().to_vec(), dp)?);
                    }
                    offset += n;
                }
            }
            Op::Reshape(x) => {
                let xs = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.reshape(xs)?);
            }
            Op::RepeatRows { x, times } => {
                let xv = self.value(*x);
                let (rows, cols) = rows_cols(xv);
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    for t in 0..*times {
                        let src = g.row(r * times + t);
                        for (d, s) in dx[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::TileRows { x, times } => {
                let xv = self.value(*x);
                let n = xv.numel();
                let mut dx = vec![0.0; n];
                for t in 0..*times {
                    for (d, s) in dx.iter_mut().zip(&g.data()[t * n..(t + 1) * n]) {
                        *d += s;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                let s = g.data()[0];
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), s));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let s = g.data()[0] / xv.numel() as f64;
                self.accumulate(grads, *x, Tensor::full(xv.shape().to_vec(), s));
            }
        }
        Ok(())
    }
}
