//! Reverse-mode automatic differentiation on a define-by-run tape.
//!
//! Every operation is evaluated eagerly when it is recorded, so a [`Graph`]
//! always holds the value of each node. Backward passes are themselves built
//! out of graph operations: [`Graph::gradient`] records the adjoint nodes,
//! reads off their values and discards them, while [`Graph::gradient_node`]
//! keeps them so the gradient can be composed into a new loss and
//! differentiated once more.
//!
//! Leaky-relu is piecewise linear; the derivative mask it produces is treated
//! as a constant, which makes second derivatives exact away from the kinks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default negative slope of the leaky-relu activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Handle to a node of a [`Graph`].
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
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Elementwise division that yields 0 where the denominator is exactly 0.
    /// Only used for the adjoints of norms, whose subgradient at 0 is taken as 0.
    SafeDiv(NodeId, NodeId),
    ScaleShift(NodeId, f64, f64),
    /// `op(a) op(b)`, each operand optionally transposed.
    MatMul(NodeId, NodeId, bool, bool),
    Transpose(NodeId),
    AddBias(NodeId, NodeId),
    /// `x W + b` in one pass.
    Affine(NodeId, NodeId, NodeId),
    /// `leaky_relu(x W + b)` in one pass.
    AffineLeaky(NodeId, NodeId, NodeId, f64),
    SumRows(NodeId),
    BroadcastRows(NodeId, usize),
    SumCols(NodeId),
    BroadcastCols(NodeId, usize),
    Sum(NodeId),
    BroadcastScalar(NodeId, Vec<usize>),
    LeakyRelu(NodeId, f64),
    /// `up ⊙ leaky_relu'(a)`: the backward of leaky-relu. The mask is treated
    /// as a constant, so only `up` receives a gradient.
    LeakyGrad(NodeId, NodeId, f64),
    Tanh(NodeId),
    Square(NodeId),
    Norm(NodeId),
    RowNorms(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::SafeDiv(..) => "safe_div",
            Op::ScaleShift(..) => "scale_shift",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::AddBias(..) => "add_bias",
            Op::Affine(..) => "affine",
            Op::AffineLeaky(..) => "affine_leaky",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::Sum(..) => "sum",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::LeakyGrad(..) => "leaky_grad",
            Op::Tanh(..) => "tanh",
            Op::Square(..) => "square",
            Op::Norm(..) => "norm",
            Op::RowNorms(..) => "row_norms",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::SafeDiv(a, b)
            | Op::MatMul(a, b, ..)
            | Op::AddBias(a, b)
            | Op::LeakyGrad(a, b, _) => vec![a, b],
            Op::Affine(a, b, c) | Op::AffineLeaky(a, b, c, _) => vec![a, b, c],
            Op::ScaleShift(a, ..)
            | Op::Transpose(a)
            | Op::SumRows(a)
            | Op::BroadcastRows(a, _)
            | Op::SumCols(a)
            | Op::BroadcastCols(a, _)
            | Op::Sum(a)
            | Op::BroadcastScalar(a, _)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::Square(a)
            | Op::Norm(a)
            | Op::RowNorms(a) => vec![a],
        }
    }
}

impl Op {
    /// Inputs that can receive a gradient through this op.
    fn differentiable_inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::LeakyGrad(up, ..) => vec![up],
            _ => self.inputs(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    /// 0 for ordinary nodes, 1 for nodes produced by [`Graph::gradient_node`].
    order: u8,
}

/// A differentiable computation tape. Node inputs always precede the node.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    creating_order: u8,
    dirty: bool,
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Shape(format!("{op}: {detail}"))
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

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    /// Records a leaf holding `value`.
    pub fn leaf(&mut self, value: Tensor) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { node: self.nodes.len(), op: "leaf" });
        }
        self.nodes.push(Node { op: Op::Leaf, value, order: self.creating_order });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Cached value of a node. Stale after [`Graph::set_value`] until the next
    /// [`Graph::evaluate`].
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.0).map(|n| &n.op), Some(Op::Leaf))
    }

    /// Replaces the value of a leaf. Dependent nodes are recomputed lazily.
    pub fn set_value(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        self.check(id)?;
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::NotLeaf(id.0));
        }
        if node.value.shape() != value.shape() {
            return Err(shape_err(
                "set_value",
                format!("leaf has shape {:?}, new value {:?}", node.value.shape(), value.shape()),
            ));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { node: id.0, op: "leaf" });
        }
        node.value = value;
        self.dirty = true;
        Ok(())
    }

    /// Returns the value of `id`, recomputing the graph first if any leaf
    /// changed since the last evaluation.
    pub fn evaluate(&mut self, id: NodeId) -> Result<Tensor> {
        self.check(id)?;
        self.refresh()?;
        Ok(self.nodes[id.0].value.clone())
    }

    fn refresh(&mut self) -> Result<()> {
        if !self.dirty {
            return Ok(());
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let value = self.compute(&self.nodes[i].op, i)?;
            self.nodes[i].value = value;
        }
        self.dirty = false;
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let inputs = op.inputs();
        for &i in &inputs {
            self.check(i)?;
        }
        let index = self.nodes.len();
        let value = self.compute(&op, index)?;
        let order = inputs.iter().map(|i| self.nodes[i.0].order).max().unwrap_or(0).max(self.creating_order);
        self.nodes.push(Node { op, value, order });
        Ok(NodeId(index))
    }

    fn compute(&self, op: &Op, index: usize) -> Result<Tensor> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        let same = |a: NodeId, b: NodeId| -> Result<()> {
            if v(a).shape() == v(b).shape() {
                Ok(())
            } else {
                Err(shape_err(op.name(), format!("{:?} vs {:?}", v(a).shape(), v(b).shape())))
            }
        };
        let matrix = |a: NodeId| -> Result<()> {
            if v(a).rank() == 2 {
                Ok(())
            } else {
                Err(shape_err(op.name(), format!("expected a matrix, got {:?}", v(a).shape())))
            }
        };
        let out = match *op {
            Op::Leaf => unreachable!("leaves are never recomputed"),
            Op::Add(a, b) => {
                same(a, b)?;
                v(a).zip_map(v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same(a, b)?;
                v(a).zip_map(v(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same(a, b)?;
                v(a).zip_map(v(b), |x, y| x * y)
            }
            Op::SafeDiv(a, b) => {
                same(a, b)?;
                v(a).zip_map(v(b), |x, y| if y == 0.0 { 0.0 } else { x / y })
            }
            Op::ScaleShift(a, s, t) => v(a).map(|x| s * x + t),
            Op::MatMul(a, b, ta, tb) => {
                matrix(a)?;
                matrix(b)?;
                let inner_a = if ta { v(a).rows() } else { v(a).cols() };
                let inner_b = if tb { v(b).cols() } else { v(b).rows() };
                if inner_a != inner_b {
                    return Err(shape_err("matmul", format!("{:?} x {:?}", v(a).shape(), v(b).shape())));
                }
                v(a).matmul_t(ta, v(b), tb)
            }
            Op::Transpose(a) => {
                matrix(a)?;
                v(a).transpose()
            }
            Op::Affine(x, w, b) => {
                matrix(x)?;
                matrix(w)?;
                if v(x).cols() != v(w).rows() || v(b).shape() != [v(w).cols()] {
                    return Err(shape_err(
                        "affine",
                        format!("{:?} x {:?} + bias {:?}", v(x).shape(), v(w).shape(), v(b).shape()),
                    ));
                }
                v(x).affine(v(w), v(b))
            }
            Op::AffineLeaky(x, w, b, s) => {
                let mut out = self.compute(&Op::Affine(x, w, b), index)?;
                for e in out.data_mut() {
                    if *e <= 0.0 {
                        *e *= s;
                    }
                }
                out
            }
            Op::AddBias(a, b) => {
                matrix(a)?;
                let (x, bias) = (v(a), v(b));
                if bias.shape() != [x.cols()] {
                    return Err(shape_err("add_bias", format!("{:?} + bias {:?}", x.shape(), bias.shape())));
                }
                let mut out = x.clone();
                for row in out.data_mut().chunks_exact_mut(bias.len().max(1)) {
                    for (o, b) in row.iter_mut().zip(bias.data()) {
                        *o += b;
                    }
                }
                out
            }
            Op::SumRows(a) => {
                matrix(a)?;
                let x = v(a);
                let mut out = vec![0.0; x.cols()];
                for i in 0..x.rows() {
                    for (o, &e) in out.iter_mut().zip(x.row(i)) {
                        *o += e;
                    }
                }
                Tensor::vector(out)
            }
            Op::BroadcastRows(a, n) => {
                let x = v(a);
                if x.rank() != 1 {
                    return Err(shape_err("broadcast_rows", format!("{:?}", x.shape())));
                }
                let mut data = Vec::with_capacity(n * x.len());
                for _ in 0..n {
                    data.extend_from_slice(x.data());
                }
                Tensor::matrix(n, x.len(), data)?
            }
            Op::SumCols(a) => {
                matrix(a)?;
                let x = v(a);
                Tensor::vector((0..x.rows()).map(|i| x.row(i).iter().sum()).collect())
            }
            Op::BroadcastCols(a, m) => {
                let x = v(a);
                if x.rank() != 1 {
                    return Err(shape_err("broadcast_cols", format!("{:?}", x.shape())));
                }
                let mut data = vec![0.0; x.len() * m];
                for (row, &e) in data.chunks_exact_mut(m.max(1)).zip(x.data()) {
                    row.fill(e);
                }
                Tensor::matrix(x.len(), m, data)?
            }
            Op::Sum(a) => Tensor::scalar(v(a).sum()),
            Op::BroadcastScalar(a, ref shape) => {
                let x = v(a);
                if x.len() != 1 {
                    return Err(shape_err("broadcast_scalar", format!("{:?}", x.shape())));
                }
                Tensor::filled(shape, x.data()[0])
            }
            Op::LeakyRelu(a, s) => v(a).map(|x| if x > 0.0 { x } else { s * x }),
            Op::LeakyGrad(u, a, s) => {
                same(u, a)?;
                v(u).zip_map(v(a), |g, x| if x > 0.0 { g } else { s * g })
            }
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::Square(a) => v(a).map(|x| x * x),
            Op::Norm(a) => Tensor::scalar(v(a).norm_squared().sqrt()),
            Op::RowNorms(a) => {
                matrix(a)?;
                let x = v(a);
                Tensor::vector((0..x.rows()).map(|i| x.row(i).iter().map(|e| e * e).sum::<f64>().sqrt()).collect())
            }
        };
        if !out.is_finite() {
            return Err(Error::NonFinite { node: index, op: op.name() });
        }
        Ok(out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::ScaleShift(a, factor, 0.0))
    }

    /// Elementwise `factor * a + shift`.
    pub fn scale_shift(&mut self, a: NodeId, factor: f64, shift: f64) -> Result<NodeId> {
        self.push(Op::ScaleShift(a, factor, shift))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b, false, false))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    /// Adds the vector `bias` to every row of the matrix `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddBias(a, bias))
    }

    /// Dense layer `x W + b` on a batch of row vectors.
    pub fn affine(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::Affine(x, weight, bias))
    }

    /// `leaky_relu(x W + b)`, recorded as one node. Requires a positive slope.
    pub fn affine_leaky(&mut self, x: NodeId, weight: NodeId, bias: NodeId, negative_slope: f64) -> Result<NodeId> {
        if negative_slope.is_nan() || negative_slope <= 0.0 {
            return self.affine(x, weight, bias).and_then(|h| self.leaky_relu(h, negative_slope));
        }
        self.push(Op::AffineLeaky(x, weight, bias, negative_slope))
    }

    /// Column sums of a matrix (sum over the batch).
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumRows(a))
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::BroadcastRows(a, rows))
    }

    /// Row sums of a matrix (one value per point).
    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumCols(a))
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::BroadcastCols(a, cols))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].value.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn broadcast_scalar(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::BroadcastScalar(a, shape.to_vec()))
    }

    pub fn leaky_relu(&mut self, a: NodeId, negative_slope: f64) -> Result<NodeId> {
        self.push(Op::LeakyRelu(a, negative_slope))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    /// Inner product of two same-shaped tensors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    /// Per-row inner products of two same-shaped matrices.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        self.sum_cols(p)
    }

    pub fn norm_squared(&mut self, a: NodeId) -> Result<NodeId> {
        let sq = self.square(a)?;
        self.sum(sq)
    }

    /// Euclidean norm; the gradient at the origin is taken as zero.
    pub fn norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Norm(a))
    }

    /// Euclidean norm of each row.
    pub fn row_norms(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowNorms(a))
    }

    /// Adjoint contributions of node `id` to its inputs, as new graph nodes.
    fn vjp(&mut self, id: NodeId, up: NodeId, wanted: &[bool]) -> Result<Vec<(NodeId, NodeId)>> {
        let op = self.nodes[id.0].op.clone();
        let want = |n: NodeId| wanted[n.0];
        let mut out = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    out.push((a, up));
                }
                if want(b) {
                    out.push((b, up));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    out.push((a, up));
                }
                if want(b) {
                    out.push((b, self.scale(up, -1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(up, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(up, a)?));
                }
            }
            Op::SafeDiv(a, b) => {
                if want(a) {
                    out.push((a, self.push(Op::SafeDiv(up, b))?));
                }
                if want(b) {
                    let uy = self.mul(up, id)?;
                    let q = self.push(Op::SafeDiv(uy, b))?;
                    out.push((b, self.scale(q, -1.0)?));
                }
            }
            Op::ScaleShift(a, s, _) => {
                if want(a) {
                    out.push((a, self.scale(up, s)?));
                }
            }
            Op::MatMul(a, b, ta, tb) => {
                if want(a) {
                    let da = if ta {
                        self.push(Op::MatMul(b, up, tb, true))?
                    } else {
                        self.push(Op::MatMul(up, b, false, !tb))?
                    };
                    out.push((a, da));
                }
                if want(b) {
                    let db = if tb {
                        self.push(Op::MatMul(up, a, true, ta))?
                    } else {
                        self.push(Op::MatMul(a, up, !ta, false))?
                    };
                    out.push((b, db));
                }
            }
            Op::Transpose(a) => {
                if want(a) {
                    out.push((a, self.transpose(up)?));
                }
            }
            Op::AffineLeaky(x, w, b, slope) => {
                // With a positive slope the output has the sign of the pre-activation.
                let inner = self.push(Op::LeakyGrad(up, id, slope))?;
                if want(x) {
                    out.push((x, self.push(Op::MatMul(inner, w, false, true))?));
                }
                if want(w) {
                    out.push((w, self.push(Op::MatMul(x, inner, true, false))?));
                }
                if want(b) {
                    out.push((b, self.sum_rows(inner)?));
                }
            }
            Op::Affine(x, w, b) => {
                if want(x) {
                    out.push((x, self.push(Op::MatMul(up, w, false, true))?));
                }
                if want(w) {
                    out.push((w, self.push(Op::MatMul(x, up, true, false))?));
                }
                if want(b) {
                    out.push((b, self.sum_rows(up)?));
                }
            }
            Op::AddBias(a, b) => {
                if want(a) {
                    out.push((a, up));
                }
                if want(b) {
                    out.push((b, self.sum_rows(up)?));
                }
            }
            Op::SumRows(a) => {
                if want(a) {
                    let n = self.nodes[a.0].value.rows();
                    out.push((a, self.broadcast_rows(up, n)?));
                }
            }
            Op::BroadcastRows(a, _) => {
                if want(a) {
                    out.push((a, self.sum_rows(up)?));
                }
            }
            Op::SumCols(a) => {
                if want(a) {
                    let m = self.nodes[a.0].value.cols();
                    out.push((a, self.broadcast_cols(up, m)?));
                }
            }
            Op::BroadcastCols(a, _) => {
                if want(a) {
                    out.push((a, self.sum_cols(up)?));
                }
            }
            Op::Sum(a) => {
                if want(a) {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    out.push((a, self.broadcast_scalar(up, &shape)?));
                }
            }
            Op::BroadcastScalar(a, _) => {
                if want(a) {
                    let s = self.sum(up)?;
                    // Restore the input's exact shape (scalar or length-1).
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let s = if shape.is_empty() { s } else { self.broadcast_scalar(s, &shape)? };
                    out.push((a, s));
                }
            }
            Op::LeakyRelu(a, slope) => {
                if want(a) {
                    out.push((a, self.push(Op::LeakyGrad(up, a, slope))?));
                }
            }
            Op::LeakyGrad(u, a, slope) => {
                if want(u) {
                    out.push((u, self.push(Op::LeakyGrad(up, a, slope))?));
                }
            }
            Op::Tanh(a) => {
                if want(a) {
                    let sq = self.square(id)?;
                    let d = self.scale_shift(sq, -1.0, 1.0)?;
                    out.push((a, self.mul(up, d)?));
                }
            }
            Op::Square(a) => {
                if want(a) {
                    let two_a = self.scale(a, 2.0)?;
                    out.push((a, self.mul(up, two_a)?));
                }
            }
            Op::Norm(a) => {
                if want(a) {
                    let q = self.push(Op::SafeDiv(up, id))?;
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let qb = self.broadcast_scalar(q, &shape)?;
                    out.push((a, self.mul(a, qb)?));
                }
            }
            Op::RowNorms(a) => {
                if want(a) {
                    let q = self.push(Op::SafeDiv(up, id))?;
                    let m = self.nodes[a.0].value.cols();
                    let qb = self.broadcast_cols(q, m)?;
                    out.push((a, self.mul(a, qb)?));
                }
            }
        }
        Ok(out)
    }

    /// Records the backward pass of `output` with respect to `wrt` and returns
    /// the adjoint node of each leaf (`None` when the output does not depend on it).
    fn backward(&mut self, output: NodeId, wrt: &[NodeId], nested: bool) -> Result<Vec<Option<NodeId>>> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
            if !self.is_leaf(w) {
                return Err(Error::NotLeaf(w.0));
            }
        }
        let out_value = &self.nodes[output.0].value;
        if out_value.len() != 1 {
            return Err(Error::NotScalar { node: output.0, shape: out_value.shape().to_vec() });
        }
        self.refresh()?;

        let last = output.0;
        let mut depends = vec![false; last + 1];
        for &w in wrt {
            if w.0 <= last {
                depends[w.0] = true;
            }
        }
        for i in 0..=last {
            if depends[i] {
                continue;
            }
            depends[i] = self.nodes[i].op.differentiable_inputs().iter().any(|n| depends[n.0]);
        }
        let mut needed = vec![false; last + 1];
        needed[last] = depends[last];
        for i in (0..=last).rev() {
            if !needed[i] {
                continue;
            }
            for n in self.nodes[i].op.differentiable_inputs() {
                if depends[n.0] {
                    needed[n.0] = true;
                }
            }
        }

        if nested && (0..=last).any(|i| needed[i] && self.nodes[i].order > 0) {
            return Err(Error::NestingDepth);
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; last + 1];
        if needed[last] {
            let seed = self.leaf(Tensor::filled(self.nodes[last].value.shape(), 1.0))?;
            adjoint[last] = Some(seed);
        }
        for i in (0..=last).rev() {
            let Some(up) = adjoint[i] else { continue };
            if !needed[i] {
                continue;
            }
            for (input, contribution) in self.vjp(NodeId(i), up, &needed)? {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(prev) => self.add(prev, contribution)?,
                    None => contribution,
                });
            }
        }
        Ok(wrt.iter().map(|w| adjoint.get(w.0).copied().flatten()).collect())
    }

    /// Gradient of a scalar node with respect to each leaf in `wrt`.
    pub fn gradient(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        let mark = self.nodes.len();
        let result = self.backward(output, wrt, false).map(|adjoints| {
            adjoints
                .iter()
                .zip(wrt)
                .map(|(adj, w)| match adj {
                    Some(a) => self.nodes[a.0].value.clone(),
                    None => Tensor::zeros(self.nodes[w.0].value.shape()),
                })
                .collect()
        });
        self.nodes.truncate(mark);
        result
    }

    /// Gradient of a scalar node with respect to one leaf, kept in the graph as
    /// a differentiable node. Only one level of nesting is supported.
    pub fn gradient_node(&mut self, output: NodeId, wrt: NodeId) -> Result<NodeId> {
        let mark = self.nodes.len();
        let saved_order = self.creating_order;
        self.creating_order = 1;
        let result = self.backward(output, &[wrt], true);
        let result = result.and_then(|adjoints| match adjoints[0] {
            Some(a) => Ok(a),
            None => {
                let zeros = Tensor::zeros(self.nodes[wrt.0].value.shape());
                self.leaf(zeros)
            }
        });
        self.creating_order = saved_order;
        if result.is_err() {
            self.nodes.truncate(mark);
        }
        result
    }
}
