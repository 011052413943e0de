//! The tape and the differentiable handle type.
//!
//! Every value produced while building an expression lives in a node of a
//! [`Graph`]. Nodes are appended in evaluation order, so a node's inputs
//! always have smaller ids and the tape is acyclic by construction.
//!
//! Backward rules are written in terms of the same recorded operations, so a
//! gradient computed with `create_graph = true` is itself a node of the graph
//! and can be differentiated again.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul {
        a: NodeId,
        b: NodeId,
        ta: bool,
        tb: bool,
    },
    Relu(NodeId),
    Exp(NodeId),
    LogSumExpRows(NodeId),
    Gather {
        a: NodeId,
        idx: Rc<[usize]>,
    },
    Scatter {
        a: NodeId,
        idx: Rc<[usize]>,
    },
    SelectRows {
        a: NodeId,
        idx: Rc<[usize]>,
    },
    IndexAddRows {
        a: NodeId,
        idx: Rc<[usize]>,
    },
    Sum(NodeId),
    Expand(NodeId),
    BroadcastRows(NodeId),
    SumRows(NodeId),
    BroadcastCols(NodeId),
    SumCols(NodeId),
    Reshape(NodeId),
}

impl Op {
    fn inputs(&self) -> [Option<NodeId>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul { a, b, .. } => [Some(a), Some(b)],
            Scale(a, _)
            | Relu(a)
            | Exp(a)
            | LogSumExpRows(a)
            | Gather { a, .. }
            | Scatter { a, .. }
            | SelectRows { a, .. }
            | IndexAddRows { a, .. }
            | Sum(a)
            | Expand(a)
            | BroadcastRows(a)
            | SumRows(a)
            | BroadcastCols(a)
            | SumCols(a)
            | Reshape(a) => [Some(a), None],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Append-only tape of operation records.
///
/// A graph is confined to one thread. Build one per training iteration and
/// drop it after the optimizer step.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.len()).finish()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A grad-tracked leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// An untracked leaf.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Var<'_>> {
        Ok(self.constant(Tensor::scalar(value)?))
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len());
        nodes.push(Node { value, op, tracked });
        Var { graph: self, id }
    }

    fn value_of(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id.0].value.clone()
    }

    fn tracked(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id.0].tracked
    }

    /// Records `value` as the result of `op`. Results of operations on
    /// untracked inputs are stored as plain constants.
    fn record(&self, name: &'static str, value: Tensor, op: Op) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let tracked = op.inputs().iter().flatten().any(|&i| self.tracked(i));
        if tracked {
            Ok(self.push(value, op, true))
        } else {
            Ok(self.push(value, Op::Leaf, false))
        }
    }

    fn owns(&self, var: Var<'_>) -> Result<()> {
        if !std::ptr::eq(self, var.graph) || var.id.0 >= self.len() {
            return Err(AutodiffError::MissingNode(var.id.0));
        }
        Ok(())
    }

    /// Reverse-mode gradient of the one-element `output` with respect to each
    /// of `wrt`.
    ///
    /// With `create_graph` the returned gradients are recorded on this graph
    /// and remain differentiable; otherwise they are untracked constants.
    /// Parameters that `output` does not depend on receive zeros.
    pub fn backward<'g>(
        &'g self,
        output: Var<'g>,
        wrt: &[Var<'g>],
        create_graph: bool,
    ) -> Result<Gradients<'g>> {
        self.owns(output)?;
        let out_value = output.value();
        if out_value.len() != 1 {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar, got shape {:?}",
                out_value.shape()
            )));
        }
        for &w in wrt {
            self.owns(w)?;
            if !w.is_tracked() {
                return Err(AutodiffError::Contract(format!(
                    "backward target node {} is not grad-tracked",
                    w.id.0
                )));
            }
        }

        let end = output.id.0 + 1;
        let mut reach = vec![false; end];
        {
            let nodes = self.nodes.borrow();
            let mut start = end;
            for w in wrt {
                if w.id.0 < end {
                    reach[w.id.0] = true;
                    start = start.min(w.id.0);
                }
            }
            for i in start..end {
                if reach[i] || !nodes[i].tracked {
                    continue;
                }
                reach[i] = nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|j| reach[j.0]);
            }
        }

        let mut grads: Vec<Option<Var<'g>>> = vec![None; end];
        if reach[output.id.0] {
            grads[output.id.0] = Some(self.constant(Tensor::ones(out_value.shape().to_vec())));
        }

        let saved = |id: NodeId| -> Var<'g> {
            if create_graph {
                Var { graph: self, id }
            } else {
                self.constant(self.value_of(id))
            }
        };

        for i in (0..end).rev() {
            if !reach[i] {
                continue;
            }
            let Some(upstream) = grads[i] else { continue };
            let op = self.nodes.borrow()[i].op.clone();
            let needs = |id: NodeId| reach[id.0];
            let mut contributions: Vec<(NodeId, Var<'g>)> = Vec::with_capacity(2);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if needs(a) {
                        contributions.push((a, upstream));
                    }
                    if needs(b) {
                        contributions.push((b, upstream));
                    }
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        contributions.push((a, upstream));
                    }
                    if needs(b) {
                        contributions.push((b, upstream.scale(-1.0)?));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        contributions.push((a, upstream.mul(saved(b))?));
                    }
                    if needs(b) {
                        contributions.push((b, upstream.mul(saved(a))?));
                    }
                }
                Op::Scale(a, c) => {
                    if needs(a) {
                        contributions.push((a, upstream.scale(c)?));
                    }
                }
                Op::MatMul { a, b, ta, tb } => {
                    if needs(a) {
                        let ga = if ta {
                            saved(b).matmul_t(upstream, tb, true)?
                        } else {
                            upstream.matmul_t(saved(b), false, !tb)?
                        };
                        contributions.push((a, ga));
                    }
                    if needs(b) {
                        let gb = if tb {
                            upstream.matmul_t(saved(a), true, ta)?
                        } else {
                            saved(a).matmul_t(upstream, !ta, false)?
                        };
                        contributions.push((b, gb));
                    }
                }
                Op::Relu(a) => {
                    if needs(a) {
                        let mask = tensor::map(&self.value_of(a), |v| if v > 0.0 { 1.0 } else { 0.0 });
                        contributions.push((a, upstream.mul(self.constant(mask))?));
                    }
                }
                Op::Exp(a) => {
                    if needs(a) {
                        contributions.push((a, upstream.mul(saved(NodeId(i)))?));
                    }
                }
                Op::LogSumExpRows(a) => {
                    if needs(a) {
                        let cols = self.value_of(a).shape()[1];
                        let lse = saved(NodeId(i)).broadcast_cols(cols)?;
                        let softmax = saved(a).sub(lse)?.exp()?;
                        contributions.push((a, upstream.broadcast_cols(cols)?.mul(softmax)?));
                    }
                }
                Op::Gather { a, idx } => {
                    if needs(a) {
                        let cols = self.value_of(a).shape()[1];
                        contributions.push((a, upstream.scatter_shared(idx, cols)?));
                    }
                }
                Op::Scatter { a, idx, .. } => {
                    if needs(a) {
                        contributions.push((a, upstream.gather_shared(idx)?));
                    }
                }
                Op::SelectRows { a, idx } => {
                    if needs(a) {
                        let rows = self.value_of(a).shape()[0];
                        contributions.push((a, upstream.index_add_rows_shared(idx, rows)?));
                    }
                }
                Op::IndexAddRows { a, idx, .. } => {
                    if needs(a) {
                        contributions.push((a, upstream.select_rows_shared(idx)?));
                    }
                }
                Op::Sum(a) => {
                    if needs(a) {
                        let shape = self.value_of(a).shape().to_vec();
                        contributions.push((a, upstream.expand(&shape)?));
                    }
                }
                Op::Expand(a) => {
                    if needs(a) {
                        let shape = self.value_of(a).shape().to_vec();
                        contributions.push((a, upstream.sum()?.reshape(&shape)?));
                    }
                }
                Op::BroadcastRows(a) => {
                    if needs(a) {
                        contributions.push((a, upstream.sum_rows()?));
                    }
                }
                Op::SumRows(a) => {
                    if needs(a) {
                        let rows = self.value_of(a).shape()[0];
                        contributions.push((a, upstream.broadcast_rows(rows)?));
                    }
                }
                Op::BroadcastCols(a) => {
                    if needs(a) {
                        contributions.push((a, upstream.sum_cols()?));
                    }
                }
                Op::SumCols(a) => {
                    if needs(a) {
                        let cols = self.value_of(a).shape()[1];
                        contributions.push((a, upstream.broadcast_cols(cols)?));
                    }
                }
                Op::Reshape(a) => {
                    if needs(a) {
                        let shape = self.value_of(a).shape().to_vec();
                        contributions.push((a, upstream.reshape(&shape)?));
                    }
                }
            }
            for (target, g) in contributions {
                grads[target.0] = Some(match grads[target.0] {
                    Some(acc) => acc.add(g)?,
                    None => g,
                });
            }
        }

        let entries = wrt
            .iter()
            .map(|&w| {
                let g = grads
                    .get(w.id.0)
                    .copied()
                    .flatten()
                    .unwrap_or_else(|| self.constant(Tensor::zeros(w.shape())));
                (w.id, g)
            })
            .collect();
        Ok(Gradients { entries })
    }
}

/// Gradients keyed by the node id of the parameter they belong to.
#[derive(Debug, Clone)]
pub struct Gradients<'g> {
    entries: Vec<(NodeId, Var<'g>)>,
}

impl<'g> Gradients<'g> {
    pub fn get(&self, param: Var<'g>) -> Option<Var<'g>> {
        self.entries
            .iter()
            .find(|(id, _)| *id == param.id)
            .map(|(_, g)| *g)
    }

    /// Gradients in the order the parameters were requested.
    pub fn vars(&self) -> Vec<Var<'g>> {
        self.entries.iter().map(|(_, g)| *g).collect()
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, g)| g.value()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id.0)
            .field("tracked", &self.is_tracked())
            .field("value", &self.value())
            .finish()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::dimension(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn check_indices(op: &'static str, idx: &[usize], bound: usize) -> Result<()> {
    if let Some(bad) = idx.iter().find(|&&i| i >= bound) {
        return Err(AutodiffError::dimension(
            op,
            format!("index {bad} out of range for extent {bound}"),
        ));
    }
    Ok(())
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Tensor {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id.0].value.shape().to_vec()
    }

    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.graph.tracked(self.id)
    }

    /// Untracked copy of this value.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant(self.value())
    }

    fn binary(&self, other: Var<'g>) -> Result<(Tensor, Tensor)> {
        self.graph.owns(other)?;
        Ok((self.value(), other.value()))
    }

    pub fn add(&self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.binary(other)?;
        same_shape("add", &a, &b)?;
        self.graph
            .record("add", tensor::zip_map(&a, &b, |x, y| x + y), Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.binary(other)?;
        same_shape("sub", &a, &b)?;
        self.graph
            .record("sub", tensor::zip_map(&a, &b, |x, y| x - y), Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(&self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = self.binary(other)?;
        same_shape("mul", &a, &b)?;
        self.graph
            .record("mul", tensor::zip_map(&a, &b, |x, y| x * y), Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, c: f64) -> Result<Var<'g>> {
        let a = self.value();
        self.graph
            .record("scale", tensor::map(&a, |x| x * c), Op::Scale(self.id, c))
    }

    pub fn neg(&self) -> Result<Var<'g>> {
        self.scale(-1.0)
    }

    pub fn matmul(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where each side is optionally transposed.
    pub fn matmul_t(&self, other: Var<'g>, ta: bool, tb: bool) -> Result<Var<'g>> {
        let (a, b) = self.binary(other)?;
        let value = tensor::matmul(&a, &b, ta, tb)?;
        self.graph.record(
            "matmul",
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
        )
    }

    /// Backward uses subgradient 0 at exactly 0.
    pub fn relu(&self) -> Result<Var<'g>> {
        let a = self.value();
        self.graph
            .record("relu", tensor::map(&a, |x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn exp(&self) -> Result<Var<'g>> {
        let a = self.value();
        self.graph.record("exp", tensor::map(&a, f64::exp), Op::Exp(self.id))
    }

    /// Row-wise `log Σ_j exp(a_ij)` of a matrix, giving a vector.
    pub fn logsumexp_rows(&self) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("logsumexp")?;
        let d = a.data();
        let out = (0..r)
            .map(|i| {
                let row = &d[i * c..(i + 1) * c];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
            })
            .collect();
        self.graph.record(
            "logsumexp",
            Tensor::from_parts(vec![r], out),
            Op::LogSumExpRows(self.id),
        )
    }

    /// Picks `a[i, idx[i]]` from each row of a matrix.
    pub fn gather(&self, idx: &[usize]) -> Result<Var<'g>> {
        self.gather_shared(idx.into())
    }

    fn gather_shared(&self, idx: Rc<[usize]>) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("gather")?;
        if idx.len() != r {
            return Err(AutodiffError::dimension(
                "gather",
                format!("{} indices for {r} rows", idx.len()),
            ));
        }
        check_indices("gather", &idx, c)?;
        let d = a.data();
        let out = idx.iter().enumerate().map(|(i, &j)| d[i * c + j]).collect();
        self.graph.record(
            "gather",
            Tensor::from_parts(vec![r], out),
            Op::Gather { a: self.id, idx },
        )
    }

    /// Inverse of [`Var::gather`]: places `v[i]` at `(i, idx[i])` of a zero matrix.
    pub fn scatter(&self, idx: &[usize], cols: usize) -> Result<Var<'g>> {
        self.scatter_shared(idx.into(), cols)
    }

    fn scatter_shared(&self, idx: Rc<[usize]>, cols: usize) -> Result<Var<'g>> {
        let a = self.value();
        if a.ndim() != 1 || a.len() != idx.len() {
            return Err(AutodiffError::dimension(
                "scatter",
                format!("{:?} with {} indices", a.shape(), idx.len()),
            ));
        }
        check_indices("scatter", &idx, cols)?;
        let r = idx.len();
        let mut out = vec![0.0; r * cols];
        for (i, (&j, &v)) in idx.iter().zip(a.data()).enumerate() {
            out[i * cols + j] = v;
        }
        self.graph.record(
            "scatter",
            Tensor::from_parts(vec![r, cols], out),
            Op::Scatter { a: self.id, idx },
        )
    }

    /// Rows `idx` of a matrix, in order; repeats allowed.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Var<'g>> {
        self.select_rows_shared(idx.into())
    }

    fn select_rows_shared(&self, idx: Rc<[usize]>) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("select_rows")?;
        if idx.is_empty() {
            return Err(AutodiffError::dimension("select_rows", "no rows selected"));
        }
        check_indices("select_rows", &idx, r)?;
        let d = a.data();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            out.extend_from_slice(&d[i * c..(i + 1) * c]);
        }
        self.graph.record(
            "select_rows",
            Tensor::from_parts(vec![idx.len(), c], out),
            Op::SelectRows { a: self.id, idx },
        )
    }

    /// Adds row `k` of `self` into row `idx[k]` of a zero `rows x c` matrix.
    pub fn index_add_rows(&self, idx: &[usize], rows: usize) -> Result<Var<'g>> {
        self.index_add_rows_shared(idx.into(), rows)
    }

    fn index_add_rows_shared(&self, idx: Rc<[usize]>, rows: usize) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("index_add_rows")?;
        if r != idx.len() {
            return Err(AutodiffError::dimension(
                "index_add_rows",
                format!("{r} rows with {} indices", idx.len()),
            ));
        }
        check_indices("index_add_rows", &idx, rows)?;
        let d = a.data();
        let mut out = vec![0.0; rows * c];
        for (k, &i) in idx.iter().enumerate() {
            for (o, v) in out[i * c..(i + 1) * c].iter_mut().zip(&d[k * c..(k + 1) * c]) {
                *o += v;
            }
        }
        self.graph.record(
            "index_add_rows",
            Tensor::from_parts(vec![rows, c], out),
            Op::IndexAddRows { a: self.id, idx },
        )
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Result<Var<'g>> {
        let a = self.value();
        let s = a.data().iter().sum();
        self.graph
            .record("sum", Tensor::from_parts(Vec::new(), vec![s]), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Result<Var<'g>> {
        let n = self.value().len() as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Var<'g>> {
        let a = self.value();
        if a.len() != 1 || shape.iter().any(|&d| d == 0) {
            return Err(AutodiffError::dimension(
                "expand",
                format!("{:?} -> {shape:?}", a.shape()),
            ));
        }
        self.graph.record(
            "expand",
            Tensor::filled(shape.to_vec(), a.data()[0]),
            Op::Expand(self.id),
        )
    }

    /// Repeats a vector of length `n` as each row of a `rows x n` matrix.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Var<'g>> {
        let a = self.value();
        if a.ndim() != 1 || rows == 0 {
            return Err(AutodiffError::dimension(
                "broadcast_rows",
                format!("{:?} x {rows}", a.shape()),
            ));
        }
        let n = a.len();
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(a.data());
        }
        self.graph.record(
            "broadcast_rows",
            Tensor::from_parts(vec![rows, n], out),
            Op::BroadcastRows(self.id),
        )
    }

    /// Column sums of a matrix (sum over axis 0).
    pub fn sum_rows(&self) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("sum_rows")?;
        let d = a.data();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(&d[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        self.graph
            .record("sum_rows", Tensor::from_parts(vec![c], out), Op::SumRows(self.id))
    }

    /// Repeats a vector of length `m` as each column of an `m x cols` matrix.
    pub fn broadcast_cols(&self, cols: usize) -> Result<Var<'g>> {
        let a = self.value();
        if a.ndim() != 1 || cols == 0 {
            return Err(AutodiffError::dimension(
                "broadcast_cols",
                format!("{:?} x {cols}", a.shape()),
            ));
        }
        let m = a.len();
        let mut out = Vec::with_capacity(m * cols);
        for &v in a.data() {
            out.extend(std::iter::repeat(v).take(cols));
        }
        self.graph.record(
            "broadcast_cols",
            Tensor::from_parts(vec![m, cols], out),
            Op::BroadcastCols(self.id),
        )
    }

    /// Row sums of a matrix (sum over axis 1).
    pub fn sum_cols(&self) -> Result<Var<'g>> {
        let a = self.value();
        let (r, c) = a.dims2("sum_cols")?;
        let d = a.data();
        let out = (0..r).map(|i| d[i * c..(i + 1) * c].iter().sum()).collect();
        self.graph
            .record("sum_cols", Tensor::from_parts(vec![r], out), Op::SumCols(self.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        let value = self.value().reshaped(shape.to_vec())?;
        self.graph.record(
            "reshape",
            value,
            Op::Reshape(self.id),
        )
    }

    /// Adds a bias vector to every row of a matrix.
    pub fn add_row_vector(&self, bias: Var<'g>) -> Result<Var<'g>> {
        let rows = self.shape().first().copied().unwrap_or(0);
        self.add(bias.broadcast_rows(rows)?)
    }

    /// Inner product of two same-shape tensors, as a scalar.
    pub fn dot(&self, other: Var<'g>) -> Result<Var<'g>> {
        self.mul(other)?.sum()
    }
}
