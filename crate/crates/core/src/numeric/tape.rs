//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Every operation appends a node whose inputs are earlier nodes, so the
//! record is already in topological order and the backward pass is a single
//! reverse sweep.

use crate::error::{Error, Result};

use super::lstm_kernel::{self, LstmCache};
use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Exact,
    /// `[1, n]` operand repeated over every row.
    Row,
    /// `[m, 1]` operand repeated over every column.
    Column,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var, usize),
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Sum(Var),
    NegLogPick { input: Var, index: usize },
    BlockLeftMul { mix: Tensor, input: Var },
    Lstm(Box<LstmNode>),
}

struct LstmNode {
    input: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    batch: usize,
    cache: LstmCache,
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Probability floor applied before the logarithm in [`Tape::neg_log_pick`].
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).require_matrix(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn broadcast_kind(&self, a: Var, b: Var, op: &'static str) -> Result<Broadcast> {
        let (m, n) = self.matrix(a, op)?;
        let (bm, bn) = self.matrix(b, op)?;
        if (bm, bn) == (m, n) {
            Ok(Broadcast::Exact)
        } else if bm == 1 && bn == n {
            Ok(Broadcast::Row)
        } else if bn == 1 && bm == m {
            Ok(Broadcast::Column)
        } else {
            Err(Error::shape(op, self.shape(a), self.shape(b)))
        }
    }

    fn zip_broadcast(
        &self,
        a: Var,
        b: Var,
        kind: Broadcast,
        f: impl Fn(f64, f64) -> f64,
    ) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b);
        let n = av.cols();
        let mut out = av.clone();
        for (idx, o) in out.data_mut().iter_mut().enumerate() {
            let other = match kind {
                Broadcast::Exact => bv.data()[idx],
                Broadcast::Row => bv.data()[idx % n],
                Broadcast::Column => bv.data()[idx / n],
            };
            *o = f(*o, other);
        }
        out
    }

    /// `a + b`; `b` may be an exact match, a `[1, n]` row or a `[m, 1]` column.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "add")?;
        let out = self.zip_broadcast(a, b, kind, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b, kind)))
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.broadcast_kind(a, b, "mul")?;
        let out = self.zip_broadcast(a, b, kind, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b, kind)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Softmax along `axis` (0: each column sums to one, 1: each row sums to one).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.value(a);
        if !value.is_finite() {
            return Err(Error::NonFinite("softmax input"));
        }
        let out = softmax(value, axis)?;
        Ok(self.push(out, Op::Softmax(a, axis)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Reinterpret the row-major data under a new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self
            .value(a)
            .reshape(shape)
            .map_err(|_| Error::shape("reshape", self.shape(a), shape))?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of nothing".into()))?;
        let (m, _) = self.matrix(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.matrix(p, "concat_cols")?;
            if pm != m {
                return Err(Error::shape(
                    "concat_cols",
                    self.shape(first),
                    self.shape(p),
                ));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidTensor("concat of nothing".into()))?;
        let (_, n) = self.matrix(first, "concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pm, pn) = self.matrix(p, "concat_rows")?;
            if pn != n {
                return Err(Error::shape(
                    "concat_rows",
                    self.shape(first),
                    self.shape(p),
                ));
            }
            rows += pm;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, n], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix(a, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::shape("slice_rows", self.shape(a), &[start, len]));
        }
        let data = self.value(a).data()[start * n..(start + len) * n].to_vec();
        let out = Tensor::new(vec![len, n], data)?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Sum of all entries as a `[1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// `-ln(max(x[index], 1e-12))` for a single-row or single-column input.
    pub fn neg_log_pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let value = self.value(a);
        if index >= value.len() {
            return Err(Error::LabelOutOfRange {
                label: index,
                classes: value.len(),
            });
        }
        let p = value.data()[index].max(LOG_CLAMP);
        Ok(self.push(Tensor::scalar(-p.ln()), Op::NegLogPick { input: a, index }))
    }

    /// Left-multiply every consecutive block of `V` rows of `input` by the
    /// constant `mix` (shape `[M, V]`), giving `[blocks·M, F]`.
    pub fn block_left_mul(&mut self, mix: &Tensor, input: Var) -> Result<Var> {
        let (mm, v) = mix.require_matrix("block_left_mul")?;
        let (rows, f) = self.matrix(input, "block_left_mul")?;
        if rows % v != 0 {
            return Err(Error::shape(
                "block_left_mul",
                mix.shape(),
                self.shape(input),
            ));
        }
        let blocks = rows / v;
        let x = self.value(input).data();
        let mut out = vec![0.0; blocks * mm * f];
        for b in 0..blocks {
            matmul_into(
                mix.data(),
                &x[b * v * f..(b + 1) * v * f],
                &mut out[b * mm * f..(b + 1) * mm * f],
                mm,
                v,
                f,
            );
        }
        let out = Tensor::new(vec![blocks * mm, f], out)?;
        Ok(self.push(
            out,
            Op::BlockLeftMul {
                mix: mix.clone(),
                input,
            },
        ))
    }

    /// Single LSTM layer over `batch` independent sequences.
    ///
    /// `input` holds the sequences stacked by rows, `[batch·T, E]` with row
    /// `b·T + t`; `w_ih` is `[E, 4K]`, `w_hh` is `[K, 4K]`, `bias` is `[1, 4K]`
    /// with gate blocks ordered input, forget, candidate, output. Returns the
    /// hidden states `[batch·T, K]` from zero initial states.
    pub fn lstm(
        &mut self,
        input: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        batch: usize,
    ) -> Result<Var> {
        let (out, cache) = lstm_kernel::forward(
            self.value(input),
            self.value(w_ih),
            self.value(w_hh),
            self.value(bias),
            batch,
        )?;
        Ok(self.push(
            out,
            Op::Lstm(Box::new(LstmNode {
                input,
                w_ih,
                w_hh,
                bias,
                batch,
                cache,
            })),
        ))
    }

    /// Propagate from a `[1, 1]` loss back to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                let mut ga = vec![0.0; m * k];
                matmul_bt_into(g.data(), bv.data(), &mut ga, m, n, k);
                accumulate(grads, *a, Tensor::new(vec![m, k], ga)?);
                let mut gb = vec![0.0; k * n];
                matmul_at_into(av.data(), g.data(), &mut gb, m, k, n);
                accumulate(grads, *b, Tensor::new(vec![k, n], gb)?);
            }
            Op::Add(a, b, kind) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, reduce_broadcast(g, *kind, self.shape(*b)));
            }
            Op::Mul(a, b, kind) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let n = av.cols();
                let mut ga = g.clone();
                let mut gb_full = g.clone();
                for (i, (ga_i, gb_i)) in
                    ga.data_mut().iter_mut().zip(gb_full.data_mut()).enumerate()
                {
                    let bval = match kind {
                        Broadcast::Exact => bv.data()[i],
                        Broadcast::Row => bv.data()[i % n],
                        Broadcast::Column => bv.data()[i / n],
                    };
                    *ga_i *= bval;
                    *gb_i *= av.data()[i];
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, reduce_broadcast(&gb_full, *kind, bv.shape()));
            }
            Op::Scale(a, f) => accumulate(grads, *a, g.scale(*f)),
            Op::Tanh(a) => {
                let mut ga = g.clone();
                for (gi, y) in ga.data_mut().iter_mut().zip(out.data()) {
                    *gi *= 1.0 - y * y;
                }
                accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (gi, y) in ga.data_mut().iter_mut().zip(out.data()) {
                    *gi *= y * (1.0 - y);
                }
                accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                for (gi, x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                    if *x <= 0.0 {
                        *gi = 0.0;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Softmax(a, axis) => accumulate(grads, *a, softmax_backward(out, g, *axis)),
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()?),
            Op::Reshape(a) => accumulate(grads, *a, g.reshape(self.shape(*a))?),
            Op::ConcatCols(parts) => {
                let m = out.rows();
                let mut offset = 0;
                for &p in parts {
                    let pn = self.value(p).cols();
                    let mut data = Vec::with_capacity(m * pn);
                    for r in 0..m {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + pn]);
                    }
                    accumulate(grads, p, Tensor::new(vec![m, pn], data)?);
                    offset += pn;
                }
            }
            Op::ConcatRows(parts) => {
                let n = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let pm = self.value(p).rows();
                    let data = g.data()[offset * n..(offset + pm) * n].to_vec();
                    accumulate(grads, p, Tensor::new(vec![pm, n], data)?);
                    offset += pm;
                }
            }
            Op::SliceRows(a, start) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut ga = Tensor::zeros(av.shape());
                ga.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                accumulate(grads, *a, Tensor::filled(self.shape(*a), gv));
            }
            Op::NegLogPick { input, index } => {
                let av = self.value(*input);
                let mut ga = Tensor::zeros(av.shape());
                let p = av.data()[*index];
                // The clamp is flat below the floor.
                if p >= LOG_CLAMP {
                    ga.data_mut()[*index] = -g.data()[0] / p;
                }
                accumulate(grads, *input, ga);
            }
            Op::BlockLeftMul { mix, input } => {
                let (mm, v) = (mix.rows(), mix.cols());
                let f = out.cols();
                let blocks = out.rows() / mm;
                let mut gx = vec![0.0; blocks * v * f];
                for b in 0..blocks {
                    matmul_at_into(
                        mix.data(),
                        &g.data()[b * mm * f..(b + 1) * mm * f],
                        &mut gx[b * v * f..(b + 1) * v * f],
                        mm,
                        v,
                        f,
                    );
                }
                accumulate(grads, *input, Tensor::new(vec![blocks * v, f], gx)?);
            }
            Op::Lstm(node) => {
                let lg = lstm_kernel::backward(
                    self.value(node.input),
                    self.value(node.w_ih),
                    self.value(node.w_hh),
                    out,
                    &node.cache,
                    g,
                    node.batch,
                )?;
                accumulate(grads, node.input, lg.input);
                accumulate(grads, node.w_ih, lg.w_ih);
                accumulate(grads, node.w_hh, lg.w_hh);
                accumulate(grads, node.bias, lg.bias);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .add_assign(&g)
            .expect("gradient shape matches its value"),
        slot @ None => *slot = Some(g),
    }
}

fn reduce_broadcast(g: &Tensor, kind: Broadcast, target: &[usize]) -> Tensor {
    match kind {
        Broadcast::Exact => g.clone(),
        Broadcast::Row => {
            let n = g.cols();
            let mut out = Tensor::zeros(target);
            for r in 0..g.rows() {
                for (o, v) in out.data_mut().iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                    *o += v;
                }
            }
            out
        }
        Broadcast::Column => {
            let mut out = Tensor::zeros(target);
            for r in 0..g.rows() {
                out.data_mut()[r] = g.row_slice(r).iter().sum();
            }
            out
        }
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` when `v` does not influence the loss.
    pub fn try_get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v` shaped like `like`; exact zeros when unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor {
        self.try_get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of a matrix along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (m, n) = x.require_matrix("softmax")?;
    let mut out = x.clone();
    let data = out.data_mut();
    match axis {
        1 => {
            for r in 0..m {
                softmax_strided(data, r * n, 1, n);
            }
        }
        0 => {
            for c in 0..n {
                softmax_strided(data, c, n, m);
            }
        }
        _ => {
            return Err(Error::InvalidTensor(format!(
                "softmax axis {axis} on a matrix"
            )))
        }
    }
    Ok(out)
}

fn softmax_strided(data: &mut [f64], start: usize, stride: usize, len: usize) {
    let idx = |i: usize| start + i * stride;
    let max = (0..len)
        .map(|i| data[idx(i)])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for i in 0..len {
        let e = (data[idx(i)] - max).exp();
        data[idx(i)] = e;
        total += e;
    }
    for i in 0..len {
        data[idx(i)] /= total;
    }
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (m, n) = (y.rows(), y.cols());
    // (lane count, lane length, distance between lanes, step within a lane)
    let (lanes, len, lane_step, stride) = if axis == 1 {
        (m, n, n, 1)
    } else {
        (n, m, 1, n)
    };
    let mut out = g.clone();
    for lane in 0..lanes {
        let s = lane * lane_step;
        let dot: f64 = (0..len)
            .map(|i| g.data()[s + i * stride] * y.data()[s + i * stride])
            .sum();
        for i in 0..len {
            let k = s + i * stride;
            out.data_mut()[k] = y.data()[k] * (g.data()[k] - dot);
        }
    }
    out
}
