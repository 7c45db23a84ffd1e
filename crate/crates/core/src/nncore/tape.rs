//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value, so node ids are
//! already a topological order and `backward` is a single reverse sweep.
//! Parameters are borrowed from a [`ParamStore`] rather than copied; their
//! gradients come back as a [`Gradients`] value that the caller accumulates.

use crate::error::{Error, Result};
use crate::nncore::{softmax, Gradients, Matrix, ParamId, ParamStore};

/// Loss floor under the logarithm in cross-entropy.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Embedding(ParamId, usize),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    OneMinus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    ConcatCols(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Softmax(NodeId),
    CrossEntropy {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    Sum(Vec<NodeId>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    // None for parameter leaves, whose value lives in the store.
    value: Option<Matrix>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
    #[cfg(test)]
    pub(crate) corrupt_sigmoid: bool,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            #[cfg(test)]
            corrupt_sigmoid: false,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_nodes.fill(None);
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        match &self.nodes[id.0] {
            Node { value: Some(v), .. } => v,
            Node {
                op: Op::Param(p), ..
            } => self.params.value(*p),
            _ => unreachable!("non-parameter nodes always carry a value"),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    fn push(&mut self, op: Op, value: Matrix, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Matrix) -> Result<NodeId> {
        self.push(Op::Constant, value, "constant")
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(node);
        node
    }

    /// Row `index` of a parameter matrix as a `1×cols` node.
    pub fn embedding(&mut self, table: ParamId, index: usize) -> Result<NodeId> {
        let m = self.params.value(table);
        if index >= m.rows() {
            return Err(Error::invalid(format!(
                "embedding index {index} out of range for table with {} rows",
                m.rows()
            )));
        }
        let row = Matrix::row_vector(m.row(index).to_vec())?;
        self.push(Op::Embedding(table, index), row, "embedding")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v, "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_bt(self.value(b))?;
        self.push(Op::MatMulBt(a, b), v, "matmul_bt")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), v, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), v, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), v, "mul")
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v, "scale")
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(Op::OneMinus(a), v, "one_minus")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v, "sigmoid")
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v, "tanh")
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.require_nonempty(parts, "concat_cols")?.rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let m = self.value(p);
                if m.rows() != rows {
                    return Err(Error::Shape {
                        op: "concat_cols",
                        left: self.value(parts[0]).shape(),
                        right: m.shape(),
                    });
                }
                data.extend_from_slice(m.row(r));
            }
        }
        let v = Matrix::from_vec(rows, cols, data)?;
        self.push(Op::ConcatCols(parts.to_vec()), v, "concat_cols")
    }

    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = self.require_nonempty(parts, "stack_rows")?.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Error::Shape {
                    op: "stack_rows",
                    left: self.value(parts[0]).shape(),
                    right: m.shape(),
                });
            }
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        let v = Matrix::from_vec(rows, cols, data)?;
        self.push(Op::StackRows(parts.to_vec()), v, "stack_rows")
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let m = self.value(a);
        if len == 0 || start + len > m.cols() {
            return Err(Error::invalid(format!(
                "slice_cols {start}..{} out of range for {:?}",
                start + len,
                m.shape()
            )));
        }
        let mut data = Vec::with_capacity(m.rows() * len);
        for r in 0..m.rows() {
            data.extend_from_slice(&m.row(r)[start..start + len]);
        }
        let v = Matrix::from_vec(m.rows(), len, data)?;
        self.push(Op::SliceCols(a, start), v, "slice_cols")
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.value(a);
        let mut data = Vec::with_capacity(m.data().len());
        for r in 0..m.rows() {
            data.extend(softmax(m.row(r))?);
        }
        let v = Matrix::from_vec(m.rows(), m.cols(), data)?;
        self.push(Op::Softmax(a), v, "softmax")
    }

    /// `-ln(softmax(logits)[target] + LOG_FLOOR)` for a single row of
    /// logits. The backward rule is `softmax - onehot`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let m = self.value(logits);
        if m.rows() != 1 {
            return Err(Error::invalid(format!(
                "cross_entropy expects a single row of logits, got {:?}",
                m.shape()
            )));
        }
        if target >= m.cols() {
            return Err(Error::invalid(format!(
                "target index {target} out of range for {} classes",
                m.cols()
            )));
        }
        let probs = softmax(m.row(0))?;
        let loss = -(probs[target] + LOG_FLOOR).ln();
        self.push(
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            Matrix::scalar(loss),
            "cross_entropy",
        )
    }

    /// Sum of same-shaped nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut acc = self.require_nonempty(parts, "sum")?.clone();
        for &p in &parts[1..] {
            acc = acc.zip_map(self.value(p), "sum", |x, y| x + y)?;
        }
        self.push(Op::Sum(parts.to_vec()), acc, "sum")
    }

    fn require_nonempty(&self, parts: &[NodeId], op: &'static str) -> Result<&Matrix> {
        parts
            .first()
            .map(|&p| self.value(p))
            .ok_or_else(|| Error::invalid(format!("{op} needs at least one input")))
    }

    /// Reverse sweep from a scalar loss. Gradients of parameters used more
    /// than once are summed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut param_grads: Vec<Option<Matrix>> = vec![None; self.params.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => accumulate(&mut param_grads[p.0], g),
                Op::Embedding(p, row) => {
                    let table = self.params.value(*p);
                    let slot = param_grads[p.0]
                        .get_or_insert_with(|| Matrix::zeros(table.rows(), table.cols()));
                    for (acc, v) in slot.row_mut(*row).iter_mut().zip(g.data()) {
                        *acc += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_bt(self.value(*b))?;
                    let db = self.value(*a).matmul_at(&g)?;
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::MatMulBt(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.matmul_at(self.value(*a))?;
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], g.map(|x| -x));
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), "mul", |x, y| x * y)?;
                    let db = g.zip_map(self.value(*a), "mul", |x, y| x * y)?;
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Scale(a, s) => accumulate(&mut grads[a.0], g.map(|x| x * s)),
                Op::OneMinus(a) => accumulate(&mut grads[a.0], g.map(|x| -x)),
                Op::Sigmoid(a) => {
                    let y = self.value(NodeId(i));
                    #[cfg(test)]
                    let factor = if self.corrupt_sigmoid { 1.5 } else { 1.0 };
                    #[cfg(not(test))]
                    let factor = 1.0;
                    let da = g.zip_map(y, "sigmoid", |gv, yv| factor * gv * yv * (1.0 - yv))?;
                    accumulate(&mut grads[a.0], da);
                }
                Op::Tanh(a) => {
                    let y = self.value(NodeId(i));
                    let da = g.zip_map(y, "tanh", |gv, yv| gv * (1.0 - yv * yv))?;
                    accumulate(&mut grads[a.0], da);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        let mut part = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            part.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads[p.0], part);
                    }
                }
                Op::StackRows(parts) => {
                    let mut row = 0;
                    for p in parts {
                        let (rows, cols) = self.value(*p).shape();
                        let data = g.data()[row * cols..(row + rows) * cols].to_vec();
                        row += rows;
                        accumulate(&mut grads[p.0], Matrix::from_vec(rows, cols, data)?);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut da = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::Softmax(a) => {
                    let y = self.value(NodeId(i));
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yv), &gv) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - inner);
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let scale = g.data()[0];
                    let mut d = probs.clone();
                    d[*target] -= 1.0;
                    d.iter_mut().for_each(|v| *v *= scale);
                    accumulate(&mut grads[logits.0], Matrix::row_vector(d)?);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut grads[p.0], g.clone());
                    }
                }
            }
        }
        Ok(Gradients { grads: param_grads })
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
