use std::sync::atomic::{AtomicUsize, Ordering};

use super::{AutodiffError, Tensor};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: usize,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Operation kinds accepted by [`Tape::forward_op`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Offset(f64),
    Tanh,
    Relu,
    Sigmoid,
    Log,
    Exp,
    Square,
    Abs,
    LogSigmoid,
    LogOneMinusSigmoid,
    Mean,
    Sum,
    MeanRows,
    SumCols,
    Concat,
    SigmoidXent(f64),
    SoftmaxXent(Vec<usize>),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Square(Var),
    Abs(Var),
    LogSigmoid(Var),
    LogOneMinusSigmoid(Var),
    Mean(Var),
    Sum(Var),
    MeanRows(Var),
    SumCols(Var),
    Concat(Var, Var),
    SigmoidXent(Var, f64),
    SoftmaxXent(Var, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Concat(a, b) => vec![*a, *b],
            Scale(a, _) | Offset(a) | Tanh(a) | Relu(a) | Sigmoid(a) | Log(a) | Exp(a)
            | Square(a) | Abs(a) | LogSigmoid(a) | LogOneMinusSigmoid(a) | Mean(a) | Sum(a)
            | MeanRows(a) | SumCols(a) | SigmoidXent(a, _) | SoftmaxXent(a, _) => vec![*a],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep is a valid backward pass.
pub struct Tape {
    id: usize,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// `softplus(u) = ln(1 + e^u)` without overflow.
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.index].value.values()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    /// Input node-ids of the operation that produced `v`.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.index].op.inputs()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var { tape: self.id, index }
    }

    fn check(&self, v: Var) -> Result<&Tensor, AutodiffError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(AutodiffError::ForeignVar);
        }
        Ok(&self.nodes[v.index].value)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    /// Generic dispatcher over [`OpKind`]; the named methods are equivalent.
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Concat => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(AutodiffError::Arity {
                expected: arity,
                got: inputs.len(),
            });
        }
        let a = inputs[0];
        match kind {
            OpKind::MatMul => self.matmul(a, inputs[1]),
            OpKind::Add => self.add(a, inputs[1]),
            OpKind::Sub => self.sub(a, inputs[1]),
            OpKind::Mul => self.mul(a, inputs[1]),
            OpKind::Concat => self.concat(a, inputs[1]),
            OpKind::Scale(s) => self.scale(a, s),
            OpKind::Offset(s) => self.offset(a, s),
            OpKind::Tanh => self.tanh(a),
            OpKind::Relu => self.relu(a),
            OpKind::Sigmoid => self.sigmoid(a),
            OpKind::Log => self.log(a),
            OpKind::Exp => self.exp(a),
            OpKind::Square => self.square(a),
            OpKind::Abs => self.abs(a),
            OpKind::LogSigmoid => self.log_sigmoid(a),
            OpKind::LogOneMinusSigmoid => self.log_one_minus_sigmoid(a),
            OpKind::Mean => self.mean(a),
            OpKind::Sum => self.sum(a),
            OpKind::MeanRows => self.mean_rows(a),
            OpKind::SumCols => self.sum_cols(a),
            OpKind::SigmoidXent(y) => self.sigmoid_xent(a, y),
            OpKind::SoftmaxXent(labels) => self.softmax_xent(a, labels),
        }
    }

    /// `(n, k) x (k, m) -> (n, m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let ((n, k), (k2, m)) = (ta.dims(), tb.dims());
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, ta.values(), (k, 1), tb.values(), (m, 1), &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), rg))
    }

    fn broadcast(&mut self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize), AutodiffError> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let ((ra, ca), (rb, cb)) = (ta.dims(), tb.dims());
        if ca != cb || !(ra == rb || ra == 1 || rb == 1) {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        Ok((ra.max(rb), ca))
    }

    fn zip_rows(&self, a: Var, b: Var, rows: usize, cols: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (va, vb) = (self.nodes[a.index].value.values(), self.nodes[b.index].value.values());
        let (sa, sb) = (va.len() > cols, vb.len() > cols);
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let ra = if sa { &va[i * cols..(i + 1) * cols] } else { &va[..cols] };
            let rb = if sb { &vb[i * cols..(i + 1) * cols] } else { &vb[..cols] };
            out.extend(ra.iter().zip(rb).map(|(&x, &y)| f(x, y)));
        }
        out
    }

    /// Elementwise sum; a single-row operand broadcasts over the batch.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (r, c) = self.broadcast("add", a, b)?;
        let out = self.zip_rows(a, b, r, c, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (r, c) = self.broadcast("sub", a, b)?;
        let out = self.zip_rows(a, b, r, c, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (r, c) = self.broadcast("mul", a, b)?;
        let out = self.zip_rows(a, b, r, c, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, AutodiffError> {
        let out = self.check(a)?.map(f);
        let rg = self.rg(&[a]);
        Ok(self.push(out, op, rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Scale(a, s), |x| s * x)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.scale(a, -1.0)
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Offset(a), |x| x + s)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Tanh(a), fast_tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    /// `log σ(t) = -softplus(-t)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::LogSigmoid(a), |t| -softplus(-t))
    }

    /// `log(1 - σ(t)) = -softplus(t)`.
    pub fn log_one_minus_sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary(a, Op::LogOneMinusSigmoid(a), |t| -softplus(t))
    }

    /// Mean over every element, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.check(a)?;
        let m = t.values().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.check(a)?.values().iter().sum::<f64>();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    /// Column means over the batch: `(n, m) -> (1, m)`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.check(a)?;
        let (n, m) = t.dims();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(t.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(1, m, out)?, Op::MeanRows(a), rg))
    }

    /// Per-example sums: `(n, m) -> (n, 1)`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let t = self.check(a)?;
        let n = t.rows();
        let out = (0..n).map(|i| t.row(i).iter().sum()).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(n, 1, out)?, Op::SumCols(a), rg))
    }

    /// Feature-axis concatenation: `(n, p) ++ (n, q) -> (n, p + q)`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let ((n, p), (n2, q)) = (ta.dims(), tb.dims());
        if n != n2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut out = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(n, p + q, out)?, Op::Concat(a, b), rg))
    }

    /// Mean binary cross-entropy of logits against a constant label `y`,
    /// `softplus(t) - y t` per element.
    pub fn sigmoid_xent(&mut self, a: Var, y: f64) -> Result<Var, AutodiffError> {
        let t = self.check(a)?;
        let m = t.values().iter().map(|&t| softplus(t) - y * t).sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(m), Op::SigmoidXent(a, y), rg))
    }

    /// Mean categorical cross-entropy of `(n, K)` logits against labels.
    pub fn softmax_xent(&mut self, a: Var, labels: Vec<usize>) -> Result<Var, AutodiffError> {
        let t = self.check(a)?;
        let (n, k) = t.dims();
        if labels.len() != n {
            return Err(AutodiffError::ShapeMismatch {
                op: "softmax_xent",
                lhs: t.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(AutodiffError::Label { label: y, classes: k });
            }
            let row = t.row(i);
            total += log_sum_exp(row) - row[y];
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(total / n as f64), Op::SoftmaxXent(a, labels), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let t = self.check(loss)?;
        if t.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(t.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(vec![1.0]);
        for i in (0..=loss.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.values();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let ((n, k), (_, m)) = (ta.dims(), tb.dims());
                if self.requires_grad(*a) {
                    // dA = dC B^T
                    let acc = slot(grads, *a, n * k);
                    gemm(n, m, k, g, (m, 1), tb.values(), (1, m), acc, 1.0);
                }
                if self.requires_grad(*b) {
                    // dB = A^T dC
                    let acc = slot(grads, *b, k * m);
                    gemm(k, n, m, ta.values(), (1, k), g, (m, 1), acc, 1.0);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let cols = node.value.cols();
                for (v, s) in [(*a, 1.0), (*b, sign)] {
                    if self.requires_grad(v) {
                        let len = self.val(v).len();
                        let acc = slot(grads, v, len);
                        reduce_broadcast(acc, g, cols, |_, gi| s * gi);
                    }
                }
            }
            Op::Mul(a, b) => {
                let cols = node.value.cols();
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.requires_grad(v) {
                        let len = self.val(v).len();
                        let o = self.val(other).values().to_vec();
                        let bo = o.len() > cols;
                        let acc = slot(grads, v, len);
                        reduce_broadcast(acc, g, cols, |idx, gi| {
                            gi * if bo { o[idx] } else { o[idx % cols] }
                        });
                    }
                }
            }
            Op::Scale(a, s) => self.elementwise(*a, g, grads, |_, _| *s),
            Op::Offset(a) => self.elementwise(*a, g, grads, |_, _| 1.0),
            Op::Tanh(a) => self.elementwise(*a, g, grads, |j, _| 1.0 - y[j] * y[j]),
            Op::Relu(a) => self.elementwise(*a, g, grads, |_, x| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::Sigmoid(a) => self.elementwise(*a, g, grads, |j, _| y[j] * (1.0 - y[j])),
            Op::Log(a) => self.elementwise(*a, g, grads, |_, x| 1.0 / x),
            Op::Exp(a) => self.elementwise(*a, g, grads, |j, _| y[j]),
            Op::Square(a) => self.elementwise(*a, g, grads, |_, x| 2.0 * x),
            Op::Abs(a) => self.elementwise(*a, g, grads, |_, x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::LogSigmoid(a) => self.elementwise(*a, g, grads, |_, t| sigmoid(-t)),
            Op::LogOneMinusSigmoid(a) => self.elementwise(*a, g, grads, |_, t| -sigmoid(t)),
            Op::Mean(a) => {
                let len = self.val(*a).len();
                let acc = slot(grads, *a, len);
                let d = g[0] / len as f64;
                acc.iter_mut().for_each(|v| *v += d);
            }
            Op::Sum(a) => {
                let len = self.val(*a).len();
                let acc = slot(grads, *a, len);
                acc.iter_mut().for_each(|v| *v += g[0]);
            }
            Op::MeanRows(a) => {
                let (n, m) = self.val(*a).dims();
                let acc = slot(grads, *a, n * m);
                for (j, v) in acc.iter_mut().enumerate() {
                    *v += g[j % m] / n as f64;
                }
            }
            Op::SumCols(a) => {
                let (n, m) = self.val(*a).dims();
                let acc = slot(grads, *a, n * m);
                for (j, v) in acc.iter_mut().enumerate() {
                    *v += g[j / m];
                }
            }
            Op::Concat(a, b) => {
                let ((n, p), q) = (self.val(*a).dims(), self.val(*b).cols());
                if self.requires_grad(*a) {
                    let acc = slot(grads, *a, n * p);
                    for i in 0..n {
                        for j in 0..p {
                            acc[i * p + j] += g[i * (p + q) + j];
                        }
                    }
                }
                if self.requires_grad(*b) {
                    let acc = slot(grads, *b, n * q);
                    for i in 0..n {
                        for j in 0..q {
                            acc[i * q + j] += g[i * (p + q) + p + j];
                        }
                    }
                }
            }
            Op::SigmoidXent(a, label) => {
                let x = self.val(*a).values();
                let len = x.len() as f64;
                let acc = slot(grads, *a, x.len());
                for (v, &t) in acc.iter_mut().zip(x) {
                    *v += g[0] * (sigmoid(t) - label) / len;
                }
            }
            Op::SoftmaxXent(a, labels) => {
                let t = self.val(*a);
                let (n, k) = t.dims();
                let acc = slot(grads, *a, n * k);
                for (i, &label) in labels.iter().enumerate() {
                    let row = t.row(i);
                    let lse = log_sum_exp(row);
                    for j in 0..k {
                        let p = (row[j] - lse).exp();
                        let onehot = if j == label { 1.0 } else { 0.0 };
                        acc[i * k + j] += g[0] * (p - onehot) / n as f64;
                    }
                }
            }
        }
    }

    /// Accumulates `g * d(out)/d(in)` for elementwise maps; `deriv(j, x_j)`.
    fn elementwise(&self, a: Var, g: &[f64], grads: &mut [Option<Vec<f64>>], deriv: impl Fn(usize, f64) -> f64) {
        if !self.requires_grad(a) {
            return;
        }
        let x = self.val(a).values();
        let acc = slot(grads, a, x.len());
        for (j, ((v, &xj), &gj)) in acc.iter_mut().zip(x).zip(g).enumerate() {
            *v += gj * deriv(j, xj);
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.index].get_or_insert_with(|| vec![0.0; len])
}

/// Adds `f(idx, g[idx])` into `acc`, summing over rows when `acc` is a
/// broadcast single row.
fn reduce_broadcast(acc: &mut [f64], g: &[f64], cols: usize, f: impl Fn(usize, f64) -> f64) {
    if acc.len() == g.len() {
        for (j, (a, &gj)) in acc.iter_mut().zip(g).enumerate() {
            *a += f(j, gj);
        }
    } else {
        for (j, &gj) in g.iter().enumerate() {
            acc[j % cols] += f(j, gj);
        }
    }
}

/// `1 - 2 / (e^{2u} + 1)`, about 4x cheaper than `f64::tanh`; the library
/// call is kept near 0 where the subtraction cancels.
fn fast_tanh(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        u.tanh()
    } else {
        1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `c = a b + beta c` with `a: (m, k)`, `b: (k, n)` given as (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: extents and strides describe in-bounds row/col-major views of
    // the slices checked above; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Result of one backward sweep, indexed by node-id.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: usize,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_deref())
    }

    /// Whether any gradient reached `v`.
    pub fn touched(&self, v: Var) -> bool {
        self.get(v).is_some()
    }

    /// Gradient of `v`, or zeros of the right length when none flowed.
    pub fn get_or_zeros(&self, v: Var, tape: &Tape) -> Vec<f64> {
        self.get(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
    }
}
