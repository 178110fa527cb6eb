use std::cell::RefCell;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{NumericsError, Result, Tensor};

/// Handle to a value recorded on a [`ComputeGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    MaskedSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Reverse-mode tape.
///
/// Nodes are appended in evaluation order, so every operation's inputs
/// precede it and a single reverse sweep suffices for [`backward`].
/// All operands are matrices; scalars are `1 x 1`.
///
/// [`backward`]: ComputeGraph::backward
#[derive(Debug, Default)]
pub struct ComputeGraph {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Tensor>>>,
}

fn shape_err(op: &str, detail: String) -> NumericsError {
    NumericsError::Shape(format!("{op}: {detail}"))
}

impl ComputeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    /// Records a leaf whose gradient is populated by [`backward`](Self::backward).
    pub fn variable(&self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&self, value: Tensor, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let tracked = inputs.iter().any(|v| nodes[v.0].tracked);
        nodes.push(Node { value, op, tracked });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// `(rows, cols)` of a matrix node.
    pub fn dims(&self, v: Var) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let t = &nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].tracked
    }

    /// Gradient of the last `backward` call with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads.borrow().get(v.0).cloned().flatten()
    }

    fn unary(&self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(f);
        self.push(value, op, &[a])
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        name: &str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            x.same_shape(y, name)?;
            let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
            Tensor::new(x.shape().to_vec(), data)?
        };
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            x.require_matrix("matmul")?;
            y.require_matrix("matmul")?;
            let (m, k, n) = (x.rows(), x.cols(), y.cols());
            if y.rows() != k {
                return Err(shape_err(
                    "matmul",
                    format!("{:?} x {:?}", x.shape(), y.shape()),
                ));
            }
            let mut out = vec![0.0; m * n];
            matmul_acc(x.data(), y.data(), &mut out, m, k, n);
            Tensor::matrix(m, n, out)
        };
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            x.require_matrix("transpose")?;
            let (m, n) = (x.rows(), x.cols());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = x.data()[i * n + j];
                }
            }
            Tensor::matrix(n, m, out)
        };
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, r) = (&nodes[a.0].value, &nodes[row.0].value);
            x.require_matrix("add_row")?;
            if r.numel() != x.cols() {
                return Err(shape_err(
                    "add_row",
                    format!("{:?} + row {:?}", x.shape(), r.shape()),
                ));
            }
            let n = x.cols();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v + r.data()[i % n])
                .collect();
            Tensor::matrix(x.rows(), n, data)
        };
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    /// Scales row `i` of an `m x n` matrix by entry `i` of an `m x 1` column.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, c) = (&nodes[a.0].value, &nodes[col.0].value);
            x.require_matrix("mul_col")?;
            if c.numel() != x.rows() {
                return Err(shape_err(
                    "mul_col",
                    format!("{:?} * col {:?}", x.shape(), c.shape()),
                ));
            }
            let n = x.cols();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v * c.data()[i / n])
                .collect();
            Tensor::matrix(x.rows(), n, data)
        };
        Ok(self.push(value, Op::MulCol(a, col), &[a, col]))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Var {
        self.unary(a, Op::Affine(a, scale), |x| scale * x + shift)
    }

    pub fn scale(&self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// Row-wise [`masked_softmax`](super::masked_softmax) with a constant mask.
    pub fn masked_softmax(&self, logits: Var, mask: &Tensor) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            super::masked_softmax(&nodes[logits.0].value, mask)?
        };
        Ok(self.push(value, Op::MaskedSoftmax(logits), &[logits]))
    }

    /// Row-wise softmax without masking.
    pub fn softmax(&self, logits: Var) -> Result<Var> {
        let (m, n) = self.dims(logits);
        self.masked_softmax(logits, &Tensor::zeros(m, n))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericsError::Contract("concat_cols of nothing".into()));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let m = nodes[parts[0].0].value.rows();
            let mut widths = Vec::with_capacity(parts.len());
            for p in parts {
                let t = &nodes[p.0].value;
                t.require_matrix("concat_cols")?;
                if t.rows() != m {
                    return Err(shape_err("concat_cols", format!("row counts {m} vs {}", t.rows())));
                }
                widths.push(t.cols());
            }
            let total: usize = widths.iter().sum();
            let mut out = Vec::with_capacity(m * total);
            for r in 0..m {
                for p in parts {
                    out.extend_from_slice(nodes[p.0].value.row(r));
                }
            }
            Tensor::matrix(m, total, out)
        };
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericsError::Contract("concat_rows of nothing".into()));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let n = nodes[parts[0].0].value.cols();
            let mut rows = 0;
            let mut out = Vec::new();
            for p in parts {
                let t = &nodes[p.0].value;
                t.require_matrix("concat_rows")?;
                if t.cols() != n {
                    return Err(shape_err("concat_rows", format!("col counts {n} vs {}", t.cols())));
                }
                rows += t.rows();
                out.extend_from_slice(t.data());
            }
            Tensor::matrix(rows, n, out)
        };
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            x.require_matrix("slice_cols")?;
            if start >= end || end > x.cols() {
                return Err(shape_err(
                    "slice_cols",
                    format!("{start}..{end} of {} columns", x.cols()),
                ));
            }
            let mut out = Vec::with_capacity(x.rows() * (end - start));
            for r in 0..x.rows() {
                out.extend_from_slice(&x.row(r)[start..end]);
            }
            Tensor::matrix(x.rows(), end - start, out)
        };
        Ok(self.push(value, Op::SliceCols(a, start), &[a]))
    }

    /// Rows selected by `index`, repeats allowed.
    pub fn gather_rows(&self, a: Var, index: &[usize]) -> Result<Var> {
        if index.is_empty() {
            return Err(NumericsError::Contract("gather_rows with no index".into()));
        }
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            x.require_matrix("gather_rows")?;
            let mut out = Vec::with_capacity(index.len() * x.cols());
            for &i in index {
                if i >= x.rows() {
                    return Err(shape_err("gather_rows", format!("row {i} of {}", x.rows())));
                }
                out.extend_from_slice(x.row(i));
            }
            Tensor::matrix(index.len(), x.cols(), out)
        };
        Ok(self.push(value, Op::GatherRows(a, index.to_vec()), &[a]))
    }

    /// Column means as a `1 x n` row.
    pub fn mean_rows(&self, a: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            x.require_matrix("mean_rows")?;
            let (m, n) = (x.rows(), x.cols());
            let mut out = vec![0.0; n];
            for r in 0..m {
                for (o, v) in out.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o /= m as f64);
            Tensor::matrix(1, n, out)
        };
        Ok(self.push(value, Op::MeanRows(a), &[a]))
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let value = Tensor::scalar(self.nodes.borrow()[a.0].value.data().iter().sum());
        self.push(value, Op::SumAll(a), &[a])
    }

    /// Mean over rows of `-log softmax(logits_i)[targets_i]`, as a scalar.
    pub fn cross_entropy(&self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (value, probs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[logits.0].value;
            x.require_matrix("cross_entropy")?;
            if targets.len() != x.rows() {
                return Err(shape_err(
                    "cross_entropy",
                    format!("{} targets for {} rows", targets.len(), x.rows()),
                ));
            }
            let n = x.cols();
            let mut probs = vec![0.0; x.numel()];
            let mut total = 0.0;
            for (r, &t) in targets.iter().enumerate() {
                if t >= n {
                    return Err(shape_err("cross_entropy", format!("class {t} of {n}")));
                }
                let row = x.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total -= row[t] - max - lse;
                for (p, v) in probs[r * n..(r + 1) * n].iter_mut().zip(row) {
                    *p = (v - max - lse).exp();
                }
            }
            (Tensor::scalar(total / targets.len() as f64), probs)
        };
        Ok(self.push(
            value,
            Op::CrossEntropy(logits, targets.to_vec(), probs),
            &[logits],
        ))
    }

    /// Populates gradients of the scalar `loss` for every tracked node.
    ///
    /// Contributions from multiple consumers of a node are summed.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.numel() != 1 {
            return Err(NumericsError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut stored = self.grads.borrow_mut();
        stored.clear();
        stored.extend(nodes.iter().zip(grads).map(|(n, g)| {
            g.filter(|_| n.tracked)
                .map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("grad shape"))
        }));
        Ok(())
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

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut [f64]> {
    if !nodes[v.0].tracked {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let out = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k, n) = (x.rows(), x.cols(), y.cols());
            if let Some(da) = slot(nodes, grads, *a) {
                matmul_bt_acc(g, y.data(), da, m, k, n);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                matmul_at_acc(x.data(), g, db, m, k, n);
            }
        }
        Op::Transpose(a) => {
            let (m, n) = (out.rows(), out.cols());
            if let Some(da) = slot(nodes, grads, *a) {
                for i in 0..m {
                    for j in 0..n {
                        da[j * m + i] += g[i * n + j];
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(d) = slot(nodes, grads, *v) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(d) = slot(nodes, grads, *a) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(d) = slot(nodes, grads, *b) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
            }
        }
        Op::Mul(a, b) => {
            let (x, y) = (nodes[a.0].value.data(), nodes[b.0].value.data());
            if let Some(d) = slot(nodes, grads, *a) {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i];
                }
            }
            if let Some(d) = slot(nodes, grads, *b) {
                for i in 0..d.len() {
                    d[i] += g[i] * x[i];
                }
            }
        }
        Op::AddRow(a, row) => {
            let n = out.cols();
            if let Some(d) = slot(nodes, grads, *a) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
            }
            if let Some(d) = slot(nodes, grads, *row) {
                for (i, gv) in g.iter().enumerate() {
                    d[i % n] += gv;
                }
            }
        }
        Op::MulCol(a, col) => {
            let n = out.cols();
            let x = nodes[a.0].value.data();
            let c = nodes[col.0].value.data();
            if let Some(d) = slot(nodes, grads, *a) {
                for (i, gv) in g.iter().enumerate() {
                    d[i] += gv * c[i / n];
                }
            }
            if let Some(d) = slot(nodes, grads, *col) {
                for (i, gv) in g.iter().enumerate() {
                    d[i / n] += gv * x[i];
                }
            }
        }
        Op::Affine(a, scale) => {
            if let Some(d) = slot(nodes, grads, *a) {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += scale * g);
            }
        }
        Op::Relu(a) => {
            let x = nodes[a.0].value.data();
            if let Some(d) = slot(nodes, grads, *a) {
                for i in 0..d.len() {
                    if x[i] > 0.0 {
                        d[i] += g[i];
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            let y = out.data();
            if let Some(d) = slot(nodes, grads, *a) {
                for i in 0..d.len() {
                    d[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
        }
        Op::MaskedSoftmax(a) => {
            let n = out.cols();
            let y = out.data();
            if let Some(d) = slot(nodes, grads, *a) {
                for r in 0..out.rows() {
                    let ys = &y[r * n..(r + 1) * n];
                    let gs = &g[r * n..(r + 1) * n];
                    let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        d[r * n + j] += ys[j] * (gs[j] - dot);
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let total = out.cols();
            let mut offset = 0;
            for p in parts {
                let w = nodes[p.0].value.cols();
                if let Some(d) = slot(nodes, grads, *p) {
                    for r in 0..out.rows() {
                        let src = &g[r * total + offset..r * total + offset + w];
                        d[r * w..(r + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, g)| *d += g);
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for p in parts {
                let len = nodes[p.0].value.numel();
                if let Some(d) = slot(nodes, grads, *p) {
                    d.iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(d, g)| *d += g);
                }
                offset += len;
            }
        }
        Op::SliceCols(a, start) => {
            let w = out.cols();
            let n = nodes[a.0].value.cols();
            if let Some(d) = slot(nodes, grads, *a) {
                for r in 0..out.rows() {
                    for j in 0..w {
                        d[r * n + start + j] += g[r * w + j];
                    }
                }
            }
        }
        Op::GatherRows(a, index) => {
            let n = out.cols();
            if let Some(d) = slot(nodes, grads, *a) {
                for (r, &src) in index.iter().enumerate() {
                    for j in 0..n {
                        d[src * n + j] += g[r * n + j];
                    }
                }
            }
        }
        Op::MeanRows(a) => {
            let x = &nodes[a.0].value;
            let (m, n) = (x.rows(), x.cols());
            if let Some(d) = slot(nodes, grads, *a) {
                for r in 0..m {
                    for j in 0..n {
                        d[r * n + j] += g[j] / m as f64;
                    }
                }
            }
        }
        Op::SumAll(a) => {
            if let Some(d) = slot(nodes, grads, *a) {
                d.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::CrossEntropy(a, targets, probs) => {
            let n = nodes[a.0].value.cols();
            let scale = g[0] / targets.len() as f64;
            if let Some(d) = slot(nodes, grads, *a) {
                for (r, &t) in targets.iter().enumerate() {
                    for j in 0..n {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        d[r * n + j] += scale * (probs[r * n + j] - onehot);
                    }
                }
            }
        }
    }
}
