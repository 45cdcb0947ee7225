//! Dense matrices and the recorded computation graph.

use std::cell::RefCell;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A dense row-major matrix of f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Contract(format!(
                "tensor data length {} does not match shape {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Gaussian init scaled by `scale`, deterministic from the stream.
    pub fn randn(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| scale * rng.normal()).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Euclidean norm of all entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRowBias(usize, usize),
    AddColBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    SoftmaxRows(usize),
    Transpose(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    MeanAll(usize),
    MseLoss(usize, usize),
    /// (input, gamma, beta); gamma/beta are (1, cols).
    LayerNormRows(usize, usize, usize),
}

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<Node>,
}

/// A recorded computation graph. Cheap to clone (shared handle).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// A handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Var {
    graph: Graph,
    idx: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut g = self.inner.borrow_mut();
        // Grad buffers are allocated lazily by backward; forward-only
        // graphs never pay for them.
        g.nodes.push(Node {
            value,
            grad: Vec::new(),
            op,
            requires_grad,
        });
        Var {
            graph: self.clone(),
            idx: g.nodes.len() - 1,
        }
    }

    /// A trainable leaf: its gradient is collected after backward.
    pub fn param(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf: participates in forward, grads still flow past it.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn same_graph(a: &Var, b: &Var) -> Result<()> {
    if !Rc::ptr_eq(&a.graph.inner, &b.graph.inner) {
        return Err(Error::Contract("operands belong to different graphs".into()));
    }
    Ok(())
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.graph.inner.borrow().nodes[self.idx].value.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        let g = self.graph.inner.borrow();
        g.nodes[self.idx].value.shape()
    }

    /// The accumulated gradient; valid after [`Var::backward`] on a
    /// downstream scalar. Zero before any backward pass.
    pub fn grad(&self) -> Tensor {
        let g = self.graph.inner.borrow();
        let node = &g.nodes[self.idx];
        let (r, c) = node.value.shape();
        if node.grad.is_empty() {
            return Tensor::zeros(r, c);
        }
        Tensor {
            rows: r,
            cols: c,
            data: node.grad.clone(),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.idx].requires_grad
    }

    fn binary_elementwise(&self, other: &Var, op_name: &'static str, op: Op) -> Result<Var> {
        same_graph(self, other)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[other.idx].value;
            if a.shape() != b.shape() {
                return Err(Error::Shape {
                    op: op_name,
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let data: Vec<f64> = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| match op {
                    Op::Add(..) => x + y,
                    Op::Sub(..) => x - y,
                    Op::Mul(..) => x * y,
                    _ => unreachable!(),
                })
                .collect();
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            }
        };
        Ok(self.graph.push(value, op, false))
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, "add", Op::Add(self.idx, other.idx))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, "sub", Op::Sub(self.idx, other.idx))
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.binary_elementwise(other, "mul", Op::Mul(self.idx, other.idx))
    }

    /// Adds a (1, cols) bias row to every row.
    pub fn add_row_bias(&self, bias: &Var) -> Result<Var> {
        same_graph(self, bias)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[bias.idx].value;
            if b.rows != 1 || b.cols != a.cols {
                return Err(Error::Shape {
                    op: "add_row_bias",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let mut data = a.data.clone();
            for r in 0..a.rows {
                for c in 0..a.cols {
                    data[r * a.cols + c] += b.data[c];
                }
            }
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            }
        };
        Ok(self
            .graph
            .push(value, Op::AddRowBias(self.idx, bias.idx), false))
    }

    /// Adds a (rows, 1) bias column to every column.
    pub fn add_col_bias(&self, bias: &Var) -> Result<Var> {
        same_graph(self, bias)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[bias.idx].value;
            if b.cols != 1 || b.rows != a.rows {
                return Err(Error::Shape {
                    op: "add_col_bias",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let mut data = a.data.clone();
            for r in 0..a.rows {
                for c in 0..a.cols {
                    data[r * a.cols + c] += b.data[r];
                }
            }
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            }
        };
        Ok(self
            .graph
            .push(value, Op::AddColBias(self.idx, bias.idx), false))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var> {
        same_graph(self, other)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[other.idx].value;
            if a.cols != b.rows {
                return Err(Error::Shape {
                    op: "matmul",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            matmul_values(a, b)
        };
        Ok(self.graph.push(value, Op::MatMul(self.idx, other.idx), false))
    }

    pub fn scale(&self, k: f64) -> Var {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data: a.data.iter().map(|v| v * k).collect(),
            }
        };
        self.graph.push(value, Op::Scale(self.idx, k), false)
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data: a.data.iter().map(|&v| f(v)).collect(),
            }
        };
        self.graph.push(value, op, false)
    }

    pub fn tanh(&self) -> Var {
        self.unary(Op::Tanh(self.idx), f64::tanh)
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(Op::Sigmoid(self.idx), |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn relu(&self) -> Var {
        self.unary(Op::Relu(self.idx), |v| v.max(0.0))
    }

    /// Row-wise softmax (max-shifted for stability).
    pub fn softmax_rows(&self) -> Var {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let mut data = vec![0.0; a.data.len()];
            for r in 0..a.rows {
                let row = &a.data[r * a.cols..(r + 1) * a.cols];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (c, &v) in row.iter().enumerate() {
                    let e = (v - m).exp();
                    data[r * a.cols + c] = e;
                    sum += e;
                }
                for c in 0..a.cols {
                    data[r * a.cols + c] /= sum;
                }
            }
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            }
        };
        self.graph.push(value, Op::SoftmaxRows(self.idx), false)
    }

    pub fn transpose(&self) -> Var {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let mut data = vec![0.0; a.data.len()];
            for r in 0..a.rows {
                for c in 0..a.cols {
                    data[c * a.rows + r] = a.data[r * a.cols + c];
                }
            }
            Tensor {
                rows: a.cols,
                cols: a.rows,
                data,
            }
        };
        self.graph.push(value, Op::Transpose(self.idx), false)
    }

    /// Horizontal concatenation: (r, c1) ++ (r, c2) -> (r, c1+c2).
    pub fn concat_cols(&self, other: &Var) -> Result<Var> {
        same_graph(self, other)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[other.idx].value;
            if a.rows != b.rows {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let cols = a.cols + b.cols;
            let mut data = Vec::with_capacity(a.rows * cols);
            for r in 0..a.rows {
                data.extend_from_slice(&a.data[r * a.cols..(r + 1) * a.cols]);
                data.extend_from_slice(&b.data[r * b.cols..(r + 1) * b.cols]);
            }
            Tensor {
                rows: a.rows,
                cols,
                data,
            }
        };
        Ok(self
            .graph
            .push(value, Op::ConcatCols(self.idx, other.idx), false))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var> {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            if start >= end || end > a.cols {
                return Err(Error::Contract(format!(
                    "slice_cols [{start},{end}) out of range for {} cols",
                    a.cols
                )));
            }
            let cols = end - start;
            let mut data = Vec::with_capacity(a.rows * cols);
            for r in 0..a.rows {
                data.extend_from_slice(&a.data[r * a.cols + start..r * a.cols + end]);
            }
            Tensor {
                rows: a.rows,
                cols,
                data,
            }
        };
        Ok(self.graph.push(value, Op::SliceCols(self.idx, start), false))
    }

    /// Rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var> {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            if start >= end || end > a.rows {
                return Err(Error::Contract(format!(
                    "slice_rows [{start},{end}) out of range for {} rows",
                    a.rows
                )));
            }
            Tensor {
                rows: end - start,
                cols: a.cols,
                data: a.data[start * a.cols..end * a.cols].to_vec(),
            }
        };
        Ok(self.graph.push(value, Op::SliceRows(self.idx, start), false))
    }

    /// Mean of all entries, as a (1,1) tensor.
    pub fn mean_all(&self) -> Var {
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            Tensor::scalar(a.data.iter().sum::<f64>() / a.data.len() as f64)
        };
        self.graph.push(value, Op::MeanAll(self.idx), false)
    }

    /// Mean squared error against a target of the same shape; (1,1).
    pub fn mse_loss(&self, target: &Var) -> Result<Var> {
        same_graph(self, target)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let b = &g.nodes[target.idx].value;
            if a.shape() != b.shape() {
                return Err(Error::Shape {
                    op: "mse_loss",
                    lhs: a.shape(),
                    rhs: b.shape(),
                });
            }
            let n = a.data.len() as f64;
            let sum: f64 = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Tensor::scalar(sum / n)
        };
        Ok(self
            .graph
            .push(value, Op::MseLoss(self.idx, target.idx), false))
    }

    /// Row-wise layer normalization with learnable gain/bias (1, cols).
    pub fn layer_norm_rows(&self, gamma: &Var, beta: &Var) -> Result<Var> {
        same_graph(self, gamma)?;
        same_graph(self, beta)?;
        let value = {
            let g = self.graph.inner.borrow();
            let a = &g.nodes[self.idx].value;
            let ga = &g.nodes[gamma.idx].value;
            let be = &g.nodes[beta.idx].value;
            if ga.shape() != (1, a.cols) || be.shape() != (1, a.cols) {
                return Err(Error::Shape {
                    op: "layer_norm_rows",
                    lhs: a.shape(),
                    rhs: ga.shape(),
                });
            }
            let mut data = vec![0.0; a.data.len()];
            for r in 0..a.rows {
                let row = &a.data[r * a.cols..(r + 1) * a.cols];
                let (mean, inv_std) = layer_norm_row_stats(row);
                for c in 0..a.cols {
                    let xhat = (row[c] - mean) * inv_std;
                    data[r * a.cols + c] = ga.data[c] * xhat + be.data[c];
                }
            }
            Tensor {
                rows: a.rows,
                cols: a.cols,
                data,
            }
        };
        Ok(self.graph.push(
            value,
            Op::LayerNormRows(self.idx, gamma.idx, beta.idx),
            false,
        ))
    }

    /// Backpropagates from this scalar, accumulating leaf gradients.
    pub fn backward(&self) -> Result<()> {
        let mut g = self.graph.inner.borrow_mut();
        let out = &g.nodes[self.idx];
        if out.value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {:?}",
                out.value.shape()
            )));
        }
        for node in g.nodes.iter_mut() {
            node.grad.clear();
            node.grad.resize(node.value.len(), 0.0);
        }
        g.nodes[self.idx].grad[0] = 1.0;

        // Creation order is a topological order; walk it backwards.
        for i in (0..=self.idx).rev() {
            let op = g.nodes[i].op;
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    add_assign(&mut g.nodes[a].grad, &go);
                    add_assign(&mut g.nodes[b].grad, &go);
                }
                Op::Sub(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    add_assign(&mut g.nodes[a].grad, &go);
                    sub_assign(&mut g.nodes[b].grad, &go);
                }
                Op::Mul(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    let av = g.nodes[a].value.data.clone();
                    let bv = g.nodes[b].value.data.clone();
                    for (k, &gv) in go.iter().enumerate() {
                        g.nodes[a].grad[k] += gv * bv[k];
                        g.nodes[b].grad[k] += gv * av[k];
                    }
                }
                Op::AddRowBias(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    let cols = g.nodes[i].value.cols;
                    add_assign(&mut g.nodes[a].grad, &go);
                    for (k, &gv) in go.iter().enumerate() {
                        g.nodes[b].grad[k % cols] += gv;
                    }
                }
                Op::AddColBias(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    let cols = g.nodes[i].value.cols;
                    add_assign(&mut g.nodes[a].grad, &go);
                    for (k, &gv) in go.iter().enumerate() {
                        g.nodes[b].grad[k / cols] += gv;
                    }
                }
                Op::MatMul(a, b) => {
                    let (ar, ac) = g.nodes[a].value.shape();
                    let (_, bc) = g.nodes[b].value.shape();
                    let go = g.nodes[i].grad.clone();
                    let av = g.nodes[a].value.data.clone();
                    let bv = g.nodes[b].value.data.clone();
                    // dA += dC . B^T
                    for r in 0..ar {
                        for k in 0..bc {
                            let gv = go[r * bc + k];
                            if gv == 0.0 {
                                continue;
                            }
                            for c in 0..ac {
                                g.nodes[a].grad[r * ac + c] += gv * bv[c * bc + k];
                            }
                        }
                    }
                    // dB += A^T . dC
                    for r in 0..ar {
                        for c in 0..ac {
                            let avv = av[r * ac + c];
                            if avv == 0.0 {
                                continue;
                            }
                            for k in 0..bc {
                                g.nodes[b].grad[c * bc + k] += avv * go[r * bc + k];
                            }
                        }
                    }
                }
                Op::Scale(a, k) => {
                    let go = g.nodes[i].grad.clone();
                    for (j, &gv) in go.iter().enumerate() {
                        g.nodes[a].grad[j] += k * gv;
                    }
                }
                Op::Tanh(a) => {
                    let go = g.nodes[i].grad.clone();
                    let yv = g.nodes[i].value.data.clone();
                    for (j, &gv) in go.iter().enumerate() {
                        g.nodes[a].grad[j] += gv * (1.0 - yv[j] * yv[j]);
                    }
                }
                Op::Sigmoid(a) => {
                    let go = g.nodes[i].grad.clone();
                    let yv = g.nodes[i].value.data.clone();
                    for (j, &gv) in go.iter().enumerate() {
                        g.nodes[a].grad[j] += gv * yv[j] * (1.0 - yv[j]);
                    }
                }
                Op::Relu(a) => {
                    let go = g.nodes[i].grad.clone();
                    let xv = g.nodes[a].value.data.clone();
                    for (j, &gv) in go.iter().enumerate() {
                        if xv[j] > 0.0 {
                            g.nodes[a].grad[j] += gv;
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let go = g.nodes[i].grad.clone();
                    let yv = g.nodes[i].value.data.clone();
                    let cols = g.nodes[i].value.cols;
                    let rows = g.nodes[i].value.rows;
                    for r in 0..rows {
                        let dot: f64 = (0..cols)
                            .map(|c| go[r * cols + c] * yv[r * cols + c])
                            .sum();
                        for c in 0..cols {
                            let j = r * cols + c;
                            g.nodes[a].grad[j] += yv[j] * (go[j] - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    let go = g.nodes[i].grad.clone();
                    let (rows, cols) = g.nodes[i].value.shape();
                    for r in 0..rows {
                        for c in 0..cols {
                            g.nodes[a].grad[c * rows + r] += go[r * cols + c];
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let go = g.nodes[i].grad.clone();
                    let a_cols = g.nodes[a].value.cols;
                    let b_cols = g.nodes[b].value.cols;
                    let rows = g.nodes[i].value.rows;
                    let cols = a_cols + b_cols;
                    for r in 0..rows {
                        for c in 0..a_cols {
                            g.nodes[a].grad[r * a_cols + c] += go[r * cols + c];
                        }
                        for c in 0..b_cols {
                            g.nodes[b].grad[r * b_cols + c] += go[r * cols + a_cols + c];
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let go = g.nodes[i].grad.clone();
                    let (rows, cols) = g.nodes[i].value.shape();
                    let a_cols = g.nodes[a].value.cols;
                    for r in 0..rows {
                        for c in 0..cols {
                            g.nodes[a].grad[r * a_cols + start + c] += go[r * cols + c];
                        }
                    }
                }
                Op::SliceRows(a, start) => {
                    let go = g.nodes[i].grad.clone();
                    let cols = g.nodes[i].value.cols;
                    for (j, &gv) in go.iter().enumerate() {
                        g.nodes[a].grad[start * cols + j] += gv;
                    }
                }
                Op::MeanAll(a) => {
                    let gv = g.nodes[i].grad[0];
                    let n = g.nodes[a].value.data.len() as f64;
                    for gslot in g.nodes[a].grad.iter_mut() {
                        *gslot += gv / n;
                    }
                }
                Op::MseLoss(a, b) => {
                    let gv = g.nodes[i].grad[0];
                    let av = g.nodes[a].value.data.clone();
                    let bv = g.nodes[b].value.data.clone();
                    let n = av.len() as f64;
                    for j in 0..av.len() {
                        let d = 2.0 * (av[j] - bv[j]) / n * gv;
                        g.nodes[a].grad[j] += d;
                        g.nodes[b].grad[j] -= d;
                    }
                }
                Op::LayerNormRows(a, gamma, beta) => {
                    let go = g.nodes[i].grad.clone();
                    let xv = g.nodes[a].value.data.clone();
                    let gav = g.nodes[gamma].value.data.clone();
                    let (rows, cols) = g.nodes[a].value.shape();
                    let ncols = cols as f64;
                    for r in 0..rows {
                        let row = &xv[r * cols..(r + 1) * cols];
                        let (mean, inv_std) = layer_norm_row_stats(row);
                        let xhat: Vec<f64> =
                            row.iter().map(|&x| (x - mean) * inv_std).collect();
                        let dy = &go[r * cols..(r + 1) * cols];
                        // Gain and bias grads.
                        for c in 0..cols {
                            g.nodes[gamma].grad[c] += dy[c] * xhat[c];
                            g.nodes[beta].grad[c] += dy[c];
                        }
                        // Input grad through the normalization.
                        let dxhat: Vec<f64> =
                            (0..cols).map(|c| dy[c] * gav[c]).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / ncols;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum::<f64>() / ncols;
                        for c in 0..cols {
                            g.nodes[a].grad[r * cols + c] +=
                                inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sub_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d -= s;
    }
}

const LAYER_NORM_EPS: f64 = 1e-8;

fn layer_norm_row_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = vec![0.0; a.rows * b.cols];
    for r in 0..a.rows {
        for k in 0..a.cols {
            let av = a.data[r * a.cols + k];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out[r * b.cols..(r + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        rows: a.rows,
        cols: b.cols,
        data: out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let g = Graph::new();
        let eye = g.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let a = g.constant(t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let out = eye.matmul(&a).unwrap();
        assert_eq!(out.value(), t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(4, 2));
        match a.matmul(&b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (4, 2));
            }
            Err(other) => panic!("expected shape error, got {other:?}"),
            Ok(_) => panic!("expected shape error"),
        }
    }

    #[test]
    fn softmax_constant_row_is_uniform() {
        let g = Graph::new();
        let a = g.constant(t(1, 4, &[3.0, 3.0, 3.0, 3.0]));
        let s = a.softmax_rows();
        for &v in s.value().data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let g = Graph::new();
        let a = g.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(a.mse_loss(&b).unwrap().value().data()[0], 0.0);
    }

    #[test]
    fn backward_of_mean_is_uniform() {
        // loss = mean(w) -> grad = 1/n everywhere; loss = sum -> ones.
        let g = Graph::new();
        let w = g.param(t(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, 4.0]));
        let loss = w.mean_all().scale(6.0); // sum(w)
        loss.backward().unwrap();
        for &gv in w.grad().data() {
            assert!((gv - 1.0).abs() < 1e-12);
        }
    }

    // Closed-form oracle: loss = mse(w.x, y) -> grad_w = 2(w.x - y) x^T / n.
    #[test]
    fn mse_grad_matches_closed_form() {
        let g = Graph::new();
        let w = g.param(t(1, 2, &[0.3, -0.7]));
        let x = g.constant(t(2, 4, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.5, -2.0, 3.0]));
        let y = g.constant(t(1, 4, &[1.0, 0.0, -1.0, 2.0]));
        let pred = w.matmul(&x).unwrap();
        let loss = pred.mse_loss(&y).unwrap();
        loss.backward().unwrap();

        let pv = pred.value();
        let xv = x.value();
        let yv = y.value();
        let n = 4.0;
        for c in 0..2 {
            let mut expect = 0.0;
            for k in 0..4 {
                expect += 2.0 * (pv.get(0, k) - yv.get(0, k)) * xv.get(c, k) / n;
            }
            assert!(
                (w.grad().get(0, c) - expect).abs() < 1e-12,
                "col {c}: {} vs {expect}",
                w.grad().get(0, c)
            );
        }
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let g = Graph::new();
        let a = g.param(Tensor::zeros(2, 2));
        assert!(matches!(a.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = mean(w + w) -> grad = 2/n.
        let g = Graph::new();
        let w = g.param(t(1, 4, &[1.0, 2.0, 3.0, 4.0]));
        let loss = w.add(&w).unwrap().mean_all();
        loss.backward().unwrap();
        for &gv in w.grad().data() {
            assert!((gv - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_slice_roundtrip_values() {
        let g = Graph::new();
        let a = g.constant(t(2, 2, &[1.0, 2.0, 5.0, 6.0]));
        let b = g.constant(t(2, 1, &[3.0, 7.0]));
        let cat = a.concat_cols(&b).unwrap();
        assert_eq!(cat.value(), t(2, 3, &[1.0, 2.0, 3.0, 5.0, 6.0, 7.0]));
        let back = cat.slice_cols(0, 2).unwrap();
        assert_eq!(back.value(), a.value());
        let last_row = cat.slice_rows(1, 2).unwrap();
        assert_eq!(last_row.value(), t(1, 3, &[5.0, 6.0, 7.0]));
    }

    #[test]
    fn layer_norm_rows_normalizes() {
        let g = Graph::new();
        let a = g.constant(t(1, 4, &[1.0, 2.0, 3.0, 4.0]));
        let gamma = g.constant(t(1, 4, &[1.0, 1.0, 1.0, 1.0]));
        let beta = g.constant(Tensor::zeros(1, 4));
        let out = a.layer_norm_rows(&gamma, &beta).unwrap().value();
        let mean: f64 = out.data().iter().sum::<f64>() / 4.0;
        let var: f64 = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }
}
