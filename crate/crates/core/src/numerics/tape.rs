//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Tape`]; node ids increase with
//! execution order, so a single reverse sweep in id order is a valid
//! topological traversal. Parameters are bound as borrowed leaves, which keeps
//! the forward pass free of parameter copies.

use std::borrow::Cow;

use super::tensor::{axpy, dot, norm, Tensor};
use super::{cosine_sim, softmax, NORM_EPS};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>, usize),
    Sum(Var),
    Mean(Var),
    Softmax(Var),
    Cosine(Var, Var),
    RowCosine(Var, Var),
    ScaleToNorm(Var, f64),
    RowScaleToNorm(Var, f64),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
        frozen: Option<usize>,
    },
    SumRows(Var),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    RepeatRows(Var),
    Row(Var, usize),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    LstmCell(Var, Var),
    Reshape(Var),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation. `'p` is the lifetime of borrowed parameter leaves.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// `None` when the variable does not influence the loss or does not require grad.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.grads[var.0]
            .as_ref()
            .map(|g| Tensor::from_parts(self.shapes[var.0].clone(), g.clone()))
    }

    pub fn slice(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrowed leaf, typically a model parameter.
    pub fn leaf(&mut self, value: &'p Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn zip_map(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch(op_name, x, y));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        Ok(self.push(out, op, &[a, b]))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = self.value(a);
        let out = Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect());
        self.push(out, op, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("add", a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("sub", a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_map("mul", a, b, |p, q| p * q, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |v| c * v, Op::Scale(a, c))
    }

    /// Adds a constant to every element.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |v| v + c, Op::Shift(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |v| v.max(0.0), Op::Relu(a))
    }

    /// `[p, q] x [q, r] -> [p, r]`; a rank-1 left operand is treated as a single row and gives `[r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let (p, q) = match x.shape() {
            [q] => (1, *q),
            [p, q] => (*p, *q),
            _ => return Err(mismatch("matmul", x, y)),
        };
        let r = match y.shape() {
            [q2, r] if *q2 == q => *r,
            _ => return Err(mismatch("matmul", x, y)),
        };
        let mut out = vec![0.0; p * r];
        let (xd, yd) = (x.data(), y.data());
        for i in 0..p {
            let orow = &mut out[i * r..(i + 1) * r];
            for k in 0..q {
                let a_ik = xd[i * q + k];
                if a_ik != 0.0 {
                    axpy(a_ik, &yd[k * r..(k + 1) * r], orow);
                }
            }
        }
        let shape = if x.shape().len() == 1 {
            vec![r]
        } else {
            vec![p, r]
        };
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), &[a, b]))
    }

    /// Concatenation of rank-1 tensors (axis 0) or rank-2 tensors along rows (axis 0) or columns (axis 1).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(&v) => self.value(v),
            None => return Err(Error::invalid("concat", "no inputs")),
        };
        let rank = first.shape().len();
        let out = match (rank, axis) {
            (1, 0) => {
                let mut data = Vec::new();
                for &p in parts {
                    let t = self.value(p);
                    if t.shape().len() != 1 {
                        return Err(mismatch("concat", first, t));
                    }
                    data.extend_from_slice(t.data());
                }
                Tensor::vector(data)
            }
            (2, 0) => {
                let cols = first.shape()[1];
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    match t.dims2() {
                        Some((r, c)) if c == cols => rows += r,
                        _ => return Err(mismatch("concat", first, t)),
                    }
                    data.extend_from_slice(t.data());
                }
                Tensor::from_parts(vec![rows, cols], data)
            }
            (2, 1) => {
                let rows = first.shape()[0];
                let mut widths = Vec::with_capacity(parts.len());
                for &p in parts {
                    let t = self.value(p);
                    match t.dims2() {
                        Some((r, c)) if r == rows => widths.push(c),
                        _ => return Err(mismatch("concat", first, t)),
                    }
                }
                let total: usize = widths.iter().sum();
                let mut data = Vec::with_capacity(rows * total);
                for i in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(i));
                    }
                }
                Tensor::from_parts(vec![rows, total], data)
            }
            _ => {
                return Err(Error::invalid(
                    "concat",
                    format!("axis {axis} invalid for rank {rank}"),
                ))
            }
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::invalid("mean", "empty tensor"));
        }
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), &[a]))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 1 {
            return Err(Error::invalid(
                "softmax",
                format!("expected a vector, got {:?}", x.shape()),
            ));
        }
        let out = softmax(x.data())?;
        Ok(self.push(Tensor::vector(out), Op::Softmax(a), &[a]))
    }

    /// Cosine similarity of two vectors; fails on a near-zero norm.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape().len() != 1 || x.shape() != y.shape() {
            return Err(mismatch("cosine", x, y));
        }
        let s = cosine_sim(x.data(), y.data())?;
        Ok(self.push(Tensor::scalar(s), Op::Cosine(a, b), &[a, b]))
    }

    /// Cosine of each row of `x: [n, p]` against `y: [p]`. Degenerate rows score 0.
    pub fn row_cosine(&mut self, x: Var, y: Var) -> Result<Var> {
        let (xm, yv) = (self.value(x), self.value(y));
        let (n, p) = xm.dims2().ok_or_else(|| mismatch("row_cosine", xm, yv))?;
        if yv.shape() != [p] {
            return Err(mismatch("row_cosine", xm, yv));
        }
        let ny = yv.norm();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let row = xm.row(i);
            let nx = norm(row);
            if nx <= NORM_EPS || ny <= NORM_EPS {
                log::warn!("degenerate vector in cosine (row {i}); raw coefficient set to 0");
                out.push(0.0);
            } else {
                out.push(dot(row, yv.data()) / (nx * ny));
            }
        }
        Ok(self.push(Tensor::vector(out), Op::RowCosine(x, y), &[x, y]))
    }

    /// Rescales a vector to norm `target`. A zero vector passes through unchanged.
    pub fn scale_to_norm(&mut self, a: Var, target: f64) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 1 {
            return Err(Error::invalid(
                "scale_to_norm",
                format!("expected a vector, got {:?}", x.shape()),
            ));
        }
        let n = x.norm();
        let out = if n <= NORM_EPS {
            log::warn!("zero-norm part in joint representation; passed through unscaled");
            x.clone()
        } else {
            Tensor::vector(x.data().iter().map(|v| v * target / n).collect())
        };
        Ok(self.push(out, Op::ScaleToNorm(a, target), &[a]))
    }

    /// Row-wise [`Tape::scale_to_norm`] on a matrix.
    pub fn row_scale_to_norm(&mut self, a: Var, target: f64) -> Result<Var> {
        let x = self.value(a);
        let (n, _) = x.dims2().ok_or_else(|| {
            Error::invalid(
                "row_scale_to_norm",
                format!("expected a matrix, got {:?}", x.shape()),
            )
        })?;
        let mut out = x.clone();
        for i in 0..n {
            let row = out.row_mut(i);
            let nr = norm(row);
            if nr <= NORM_EPS {
                log::warn!(
                    "zero-norm part in joint representation (row {i}); passed through unscaled"
                );
            } else {
                row.iter_mut().for_each(|v| *v *= target / nr);
            }
        }
        Ok(self.push(out, Op::RowScaleToNorm(a, target), &[a]))
    }

    /// Selects rows of `table` by id. The gradient never flows into `frozen`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], frozen: Option<usize>) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = t.dims2().ok_or_else(|| {
            Error::invalid(
                "gather_rows",
                format!("expected a matrix, got {:?}", t.shape()),
            )
        })?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(
                "gather_rows",
                format!("id {bad} out of range for {rows} rows"),
            ));
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::from_parts(vec![ids.len(), cols], data);
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
                frozen,
            },
            &[table],
        ))
    }

    fn reduce_rows(&mut self, a: Var, name: &'static str) -> Result<(usize, usize)> {
        let x = self.value(a);
        match x.dims2() {
            Some((n, c)) if n > 0 => Ok((n, c)),
            _ => Err(Error::invalid(
                name,
                format!("expected a non-empty matrix, got {:?}", x.shape()),
            )),
        }
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.reduce_rows(a, "sum_rows")?;
        let mut out = vec![0.0; c];
        for row in self.value(a).rows() {
            axpy(1.0, row, &mut out);
        }
        Ok(self.push(Tensor::vector(out), Op::SumRows(a), &[a]))
    }

    /// Coordinate-wise mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.reduce_rows(a, "mean_rows")?;
        let mut out = vec![0.0; c];
        for row in self.value(a).rows() {
            axpy(1.0, row, &mut out);
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a), &[a]))
    }

    /// Coordinate-wise max over rows; the first maximal row receives the gradient.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.reduce_rows(a, "max_rows")?;
        let x = self.value(a);
        let mut out = x.row(0).to_vec();
        let mut arg = vec![0; c];
        for (i, row) in x.rows().enumerate().skip(1) {
            for j in 0..c {
                if row[j] > out[j] {
                    out[j] = row[j];
                    arg[j] = i;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MaxRows(a, arg), &[a]))
    }

    /// Tiles a vector into `n` identical rows.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 1 {
            return Err(Error::invalid(
                "repeat_rows",
                format!("expected a vector, got {:?}", x.shape()),
            ));
        }
        let c = x.len();
        let data = x.data().repeat(n);
        Ok(self.push(
            Tensor::from_parts(vec![n, c], data),
            Op::RepeatRows(a),
            &[a],
        ))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let x = self.value(a);
        match x.dims2() {
            Some((n, _)) if i < n => {
                let out = Tensor::vector(x.row(i).to_vec());
                Ok(self.push(out, Op::Row(a, i), &[a]))
            }
            _ => Err(Error::invalid(
                "row",
                format!("row {i} of shape {:?}", x.shape()),
            )),
        }
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 1 || start + len > x.len() {
            return Err(Error::invalid(
                "slice",
                format!("[{start}, {}) of shape {:?}", start + len, x.shape()),
            ));
        }
        let out = Tensor::vector(x.data()[start..start + len].to_vec());
        Ok(self.push(out, Op::Slice(a, start), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if shape.iter().product::<usize>() != x.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: x.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = Tensor::from_parts(shape.to_vec(), x.data().to_vec());
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = match parts.first() {
            Some(&v) => self.value(v),
            None => return Err(Error::invalid("stack_rows", "no inputs")),
        };
        let c = first.len();
        let mut data = Vec::with_capacity(parts.len() * c);
        for &p in parts {
            let t = self.value(p);
            if t.shape() != [c] {
                return Err(mismatch("stack_rows", first, t));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_parts(vec![parts.len(), c], data);
        Ok(self.push(out, Op::StackRows(parts.to_vec()), parts))
    }

    /// Fused LSTM pointwise update. `z` holds pre-activations for the input,
    /// forget, output and candidate gates (in that order, `4h` values); returns
    /// `[h_t ‖ c_t]`.
    pub fn lstm_cell(&mut self, z: Var, c_prev: Var) -> Result<Var> {
        let (zt, ct) = (self.value(z), self.value(c_prev));
        let h = ct.len();
        if zt.shape() != [4 * h] || ct.shape() != [h] {
            return Err(mismatch("lstm_cell", zt, ct));
        }
        let zd = zt.data();
        let mut out = vec![0.0; 2 * h];
        for j in 0..h {
            let i = sigmoid(zd[j]);
            let f = sigmoid(zd[h + j]);
            let o = sigmoid(zd[2 * h + j]);
            let g = zd[3 * h + j].tanh();
            let c = f * ct.data()[j] + i * g;
            out[j] = o * c.tanh();
            out[h + j] = c;
        }
        Ok(self.push(Tensor::vector(out), Op::LstmCell(z, c_prev), &[z, c_prev]))
    }

    /// Propagates d`loss` back to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn backprop(&self, node: &Node<'p>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.as_ref();
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].needs_grad {
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(buf);
            }
        };
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |d| axpy(1.0, g, d));
                acc(*b, &mut |d| axpy(1.0, g, d));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| axpy(1.0, g, d));
                acc(*b, &mut |d| axpy(-1.0, g, d));
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |d| {
                    d.iter_mut()
                        .zip(g)
                        .zip(y)
                        .for_each(|((d, g), y)| *d += g * y)
                });
                acc(*b, &mut |d| {
                    d.iter_mut()
                        .zip(g)
                        .zip(x)
                        .for_each(|((d, g), x)| *d += g * x)
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |d| axpy(*c, g, d)),
            Op::Shift(a) => acc(*a, &mut |d| axpy(1.0, g, d)),
            Op::Tanh(a) => acc(*a, &mut |d| {
                d.iter_mut()
                    .zip(g)
                    .zip(out)
                    .for_each(|((d, g), y)| *d += g * (1.0 - y * y))
            }),
            Op::Sigmoid(a) => acc(*a, &mut |d| {
                d.iter_mut()
                    .zip(g)
                    .zip(out)
                    .for_each(|((d, g), y)| *d += g * y * (1.0 - y))
            }),
            Op::Relu(a) => {
                let x = val(*a).data();
                acc(*a, &mut |d| {
                    d.iter_mut()
                        .zip(g)
                        .zip(x)
                        .for_each(|((d, g), x)| *d += if *x > 0.0 { *g } else { 0.0 })
                })
            }
            Op::MatMul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let (q, r) = y.dims2().expect("matmul rhs is a matrix");
                let p = x.len() / q;
                let (xd, yd) = (x.data(), y.data());
                if wants(*a) {
                    acc(*a, &mut |d| {
                        for i in 0..p {
                            let grow = &g[i * r..(i + 1) * r];
                            for k in 0..q {
                                d[i * q + k] += dot(grow, &yd[k * r..(k + 1) * r]);
                            }
                        }
                    });
                }
                if wants(*b) {
                    acc(*b, &mut |d| {
                        for i in 0..p {
                            let grow = &g[i * r..(i + 1) * r];
                            for k in 0..q {
                                let a_ik = xd[i * q + k];
                                if a_ik != 0.0 {
                                    axpy(a_ik, grow, &mut d[k * r..(k + 1) * r]);
                                }
                            }
                        }
                    });
                }
            }
            Op::Concat(parts, axis) => {
                let total_cols = node.value.dims2().map(|(_, c)| c);
                match (node.value.shape().len(), axis) {
                    (2, 1) => {
                        let rows = node.value.shape()[0];
                        let tc = total_cols.unwrap();
                        let mut offset = 0;
                        for &p in parts {
                            let c = val(p).shape()[1];
                            acc(p, &mut |d| {
                                for i in 0..rows {
                                    axpy(
                                        1.0,
                                        &g[i * tc + offset..i * tc + offset + c],
                                        &mut d[i * c..(i + 1) * c],
                                    );
                                }
                            });
                            offset += c;
                        }
                    }
                    _ => {
                        let mut offset = 0;
                        for &p in parts {
                            let n = val(p).len();
                            acc(p, &mut |d| axpy(1.0, &g[offset..offset + n], d));
                            offset += n;
                        }
                    }
                }
            }
            Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0] / n))
            }
            Op::Softmax(a) => {
                let gy = dot(g, out);
                acc(*a, &mut |d| {
                    d.iter_mut()
                        .zip(g)
                        .zip(out)
                        .for_each(|((d, g), y)| *d += y * (g - gy))
                })
            }
            Op::Cosine(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                let (nx, ny, s) = (norm(x), norm(y), out[0]);
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[0] * (y[j] / (nx * ny) - s * x[j] / (nx * nx));
                    }
                });
                acc(*b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[0] * (x[j] / (nx * ny) - s * y[j] / (ny * ny));
                    }
                });
            }
            Op::RowCosine(xv, yv) => {
                let (xm, y) = (val(*xv), val(*yv).data());
                let (n, p) = xm.dims2().unwrap();
                let ny = norm(y);
                let live: Vec<(usize, f64)> = (0..n)
                    .map(|i| (i, norm(xm.row(i))))
                    .filter(|&(_, nx)| nx > NORM_EPS && ny > NORM_EPS)
                    .collect();
                acc(*xv, &mut |d| {
                    for &(i, nx) in &live {
                        let (row, s) = (xm.row(i), out[i]);
                        for j in 0..p {
                            d[i * p + j] += g[i] * (y[j] / (nx * ny) - s * row[j] / (nx * nx));
                        }
                    }
                });
                acc(*yv, &mut |d| {
                    for &(i, nx) in &live {
                        let (row, s) = (xm.row(i), out[i]);
                        for j in 0..p {
                            d[j] += g[i] * (row[j] / (nx * ny) - s * y[j] / (ny * ny));
                        }
                    }
                });
            }
            Op::ScaleToNorm(a, target) => {
                let x = val(*a).data();
                acc(*a, &mut |d| scale_to_norm_grad(x, *target, g, d));
            }
            Op::RowScaleToNorm(a, target) => {
                let xm = val(*a);
                let (n, c) = xm.dims2().unwrap();
                acc(*a, &mut |d| {
                    for i in 0..n {
                        scale_to_norm_grad(
                            xm.row(i),
                            *target,
                            &g[i * c..(i + 1) * c],
                            &mut d[i * c..(i + 1) * c],
                        );
                    }
                });
            }
            Op::GatherRows { table, ids, frozen } => {
                let c = val(*table).shape()[1];
                acc(*table, &mut |d| {
                    for (k, &id) in ids.iter().enumerate() {
                        if Some(id) != *frozen {
                            axpy(1.0, &g[k * c..(k + 1) * c], &mut d[id * c..(id + 1) * c]);
                        }
                    }
                });
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (n, c) = val(*a).dims2().unwrap();
                let w = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                acc(*a, &mut |d| {
                    for i in 0..n {
                        axpy(w, g, &mut d[i * c..(i + 1) * c]);
                    }
                });
            }
            Op::MaxRows(a, arg) => {
                let c = arg.len();
                acc(*a, &mut |d| {
                    for (j, &i) in arg.iter().enumerate() {
                        d[i * c + j] += g[j];
                    }
                });
            }
            Op::RepeatRows(a) => {
                let c = val(*a).len();
                acc(*a, &mut |d| {
                    for chunk in g.chunks(c) {
                        axpy(1.0, chunk, d);
                    }
                });
            }
            Op::Row(a, i) => {
                let c = g.len();
                acc(*a, &mut |d| axpy(1.0, g, &mut d[i * c..(i + 1) * c]));
            }
            Op::Reshape(a) => acc(*a, &mut |d| axpy(1.0, g, d)),
            Op::Slice(a, start) => acc(*a, &mut |d| axpy(1.0, g, &mut d[*start..*start + g.len()])),
            Op::StackRows(parts) => {
                let c = g.len() / parts.len();
                for (i, &p) in parts.iter().enumerate() {
                    acc(p, &mut |d| axpy(1.0, &g[i * c..(i + 1) * c], d));
                }
            }
            Op::LstmCell(z, c_prev) => {
                let (zd, cp) = (val(*z).data(), val(*c_prev).data());
                let h = cp.len();
                let (gh, gc) = g.split_at(h);
                let mut dz = vec![0.0; 4 * h];
                let mut dc_prev = vec![0.0; h];
                for j in 0..h {
                    let i = sigmoid(zd[j]);
                    let f = sigmoid(zd[h + j]);
                    let o = sigmoid(zd[2 * h + j]);
                    let gg = zd[3 * h + j].tanh();
                    let tc = out[h + j].tanh();
                    let dc = gc[j] + gh[j] * o * (1.0 - tc * tc);
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[h + j] = dc * cp[j] * f * (1.0 - f);
                    dz[2 * h + j] = gh[j] * tc * o * (1.0 - o);
                    dz[3 * h + j] = dc * i * (1.0 - gg * gg);
                    dc_prev[j] = dc * f;
                }
                acc(*z, &mut |d| axpy(1.0, &dz, d));
                acc(*c_prev, &mut |d| axpy(1.0, &dc_prev, d));
            }
        }
    }
}

fn scale_to_norm_grad(x: &[f64], target: f64, g: &[f64], d: &mut [f64]) {
    let n = norm(x);
    if n <= NORM_EPS {
        axpy(1.0, g, d);
        return;
    }
    let xg = dot(x, g);
    for j in 0..x.len() {
        d[j] += target / n * (g[j] - x[j] * xg / (n * n));
    }
}
