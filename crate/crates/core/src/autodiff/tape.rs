use std::sync::Arc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis removed by [`Tape::sum_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Sum over rows: `N×C → 1×C`.
    Rows,
    /// Sum over columns: `N×C → N×1`.
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    Abs(NodeId),
    Relu(NodeId),
    Elu(NodeId),
    RowSoftmax(NodeId),
    Sum(NodeId),
    SumAxis(NodeId, Axis),
    Trace(NodeId),
    Frobenius(NodeId),
    SparseMatMul(Arc<CsrMatrix>, NodeId),
    RowGather(NodeId, Arc<[usize]>),
    AsymAbs(NodeId, f64),
    Log(NodeId),
    DivConst(NodeId, f64),
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
}

impl Op {
    fn inputs(&self) -> [Option<NodeId>; 2] {
        match self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(*a), Some(*b)],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Abs(a)
            | Op::Relu(a)
            | Op::Elu(a)
            | Op::RowSoftmax(a)
            | Op::Sum(a)
            | Op::SumAxis(a, _)
            | Op::Trace(a)
            | Op::Frobenius(a)
            | Op::SparseMatMul(_, a)
            | Op::RowGather(a, _)
            | Op::AsymAbs(a, _)
            | Op::Log(a)
            | Op::DivConst(a, _) => [Some(*a), None],
            Op::SoftmaxCrossEntropy { logits, .. } => [Some(*logits), None],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "multiply",
            Op::Div(..) => "divide",
            Op::Scale(..) => "scalar-multiply",
            Op::Transpose(..) => "transpose",
            Op::Abs(..) => "abs",
            Op::Relu(..) => "relu",
            Op::Elu(..) => "elu",
            Op::RowSoftmax(..) => "row-softmax",
            Op::Sum(..) => "reduce-sum",
            Op::SumAxis(..) => "reduce-sum-axis",
            Op::Trace(..) => "trace",
            Op::Frobenius(..) => "frobenius-norm",
            Op::SparseMatMul(..) => "sparse-dense-matmul",
            Op::RowGather(..) => "row-gather",
            Op::AsymAbs(..) => "asymmetric-abs",
            Op::Log(..) => "log",
            Op::DivConst(..) => "divide-by-constant",
            Op::SoftmaxCrossEntropy { .. } => "softmax-cross-entropy",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    trainable: bool,
    /// Depends on a trainable leaf.
    needs_grad: bool,
}

/// Below this norm the Frobenius-norm gradient is defined as zero.
pub const FROBENIUS_GUARD: f64 = 1e-12;

/// Append-only record of an eagerly evaluated computation.
///
/// Every primitive computes its forward value immediately and appends a node
/// whose inputs are strictly earlier nodes, so the node order is a valid
/// topological order for the reverse sweep.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
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

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes[id.0].trainable
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    /// Trainable leaves in recording order.
    pub fn params(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].trainable)
            .map(NodeId)
            .collect()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, true)
    }

    /// Constant leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            trainable,
            needs_grad: trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op, value: Tensor) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFiniteValue { op: op.name() });
        }
        let needs_grad = op.inputs().iter().flatten().any(|id| self.nodes[id.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            trainable: false,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).require_matrix("matmul")?;
        let (k2, n) = self.value(b).require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        self.record(Op::MatMul(a, b), Tensor::matrix(m, n, out))
    }

    fn elementwise(
        &mut self,
        op: Op,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let value = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(va.shape().to_vec(), data)?
        } else if vb.is_scalar() {
            let y = vb.item();
            va.map(|x| f(x, y))
        } else if va.is_scalar() {
            let x = va.item();
            vb.map(|y| f(x, y))
        } else {
            return Err(Error::shape(
                op.name(),
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        };
        self.record(op, value)
    }

    /// Elementwise sum; either operand may be a scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(Op::Div(a, b), a, b, |x, y| x / y)
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| c * x);
        self.record(Op::Scale(a, c), v)
    }

    pub fn div_const(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x / c);
        self.record(Op::DivConst(a, c), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).require_matrix("transpose")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.record(Op::Transpose(a), Tensor::matrix(c, r, out))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::abs);
        self.record(Op::Abs(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.record(Op::Relu(a), v)
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.record(Op::Elu(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::ln);
        self.record(Op::Log(a), v)
    }

    /// `ρx` for `x ≥ 0`, `−x` otherwise.
    pub fn asym_abs(&mut self, a: NodeId, rho: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| asym_abs(x, rho));
        self.record(Op::AsymAbs(a, rho), v)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).require_matrix("row-softmax")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            softmax_into(&src[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        self.record(Op::RowSoftmax(a), Tensor::matrix(r, c, out))
    }

    /// Sum of all entries.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.record(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn sum_axis(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        let (r, c) = self.value(a).require_matrix("reduce-sum-axis")?;
        let src = self.value(a).data();
        let value = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                        *o += v;
                    }
                }
                Tensor::matrix(1, c, out)
            }
            Axis::Cols => {
                let out = (0..r).map(|i| src[i * c..(i + 1) * c].iter().sum()).collect();
                Tensor::matrix(r, 1, out)
            }
        };
        self.record(Op::SumAxis(a, axis), value)
    }

    pub fn trace(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(a).require_matrix("trace")?;
        if r != c {
            return Err(Error::shape("trace", format!("{r}x{c} is not square")));
        }
        let t = (0..r).map(|i| self.value(a).get(i, i)).sum();
        self.record(Op::Trace(a), Tensor::scalar(t))
    }

    pub fn frobenius(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        self.record(Op::Frobenius(a), Tensor::scalar(n))
    }

    /// `m · x` with `m` a constant sparse matrix.
    pub fn sparse_matmul(&mut self, m: Arc<CsrMatrix>, x: NodeId) -> Result<NodeId> {
        let (r, c) = self.value(x).require_matrix("sparse-dense-matmul")?;
        if m.cols() != r {
            return Err(Error::shape(
                "sparse-dense-matmul",
                format!("{}x{} · {r}x{c}", m.rows(), m.cols()),
            ));
        }
        let out = m.mul_dense(self.value(x).data(), c);
        let rows = m.rows();
        self.record(Op::SparseMatMul(m, x), Tensor::matrix(rows, c, out))
    }

    /// Rows of `a` selected by `index` (repeats allowed).
    pub fn row_gather(&mut self, a: NodeId, index: Arc<[usize]>) -> Result<NodeId> {
        let (r, c) = self.value(a).require_matrix("row-gather")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(Error::shape("row-gather", format!("row {bad} of {r}")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            out.extend_from_slice(src.row(i));
        }
        let n = index.len();
        self.record(Op::RowGather(a, index), Tensor::matrix(n, c, out))
    }

    /// Summed negative log-likelihood of row-softmax at the given labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: Arc<[usize]>) -> Result<NodeId> {
        let (r, c) = self.value(logits).require_matrix("softmax-cross-entropy")?;
        if labels.len() != r {
            return Err(Error::shape(
                "softmax-cross-entropy",
                format!("{} labels for {r} rows", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: c,
            });
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
            softmax_into(row, &mut probs[i * c..(i + 1) * c]);
        }
        let probs = Tensor::matrix(r, c, probs);
        self.record(
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            },
            Tensor::scalar(loss),
        )
    }

    /// Reverse sweep from a scalar `loss` with unit seed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.backward_seeded(loss, 1.0)
    }

    pub fn backward_seeded(&self, loss: NodeId, seed: f64) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if !shape.is_empty() {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(seed));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |id: NodeId| &self.nodes[id.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                if self.nodes[a.0].needs_grad {
                    let da = slot(grads, *a, val(*a));
                    gemm(m, n, k, g.data(), false, val(*b).data(), true, da.data_mut(), true);
                }
                if self.nodes[b.0].needs_grad {
                    let db = slot(grads, *b, val(*b));
                    gemm(k, m, n, val(*a).data(), true, g.data(), false, db.data_mut(), true);
                }
            }
            Op::Add(a, b) => {
                accumulate_broadcast(grads, *a, val(*a), g, |_, _, gv| gv);
                accumulate_broadcast(grads, *b, val(*b), g, |_, _, gv| gv);
            }
            Op::Sub(a, b) => {
                accumulate_broadcast(grads, *a, val(*a), g, |_, _, gv| gv);
                accumulate_broadcast(grads, *b, val(*b), g, |_, _, gv| -gv);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate_pair(grads, *a, va, vb, g, |_, y, gv| gv * y);
                accumulate_pair(grads, *b, vb, va, g, |_, x, gv| gv * x);
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate_pair(grads, *a, va, vb, g, |_, y, gv| gv / y);
                accumulate_pair(grads, *b, vb, va, g, |y, x, gv| -gv * x / (y * y));
            }
            Op::Scale(a, c) => unary(grads, *a, val(*a), g, |_, gv| c * gv),
            Op::DivConst(a, c) => unary(grads, *a, val(*a), g, |_, gv| gv / c),
            Op::Transpose(a) => {
                let (r, c) = (val(*a).rows(), val(*a).cols());
                let da = slot(grads, *a, val(*a));
                let gd = g.data();
                let dd = da.data_mut();
                for x in 0..r {
                    for y in 0..c {
                        dd[x * c + y] += gd[y * r + x];
                    }
                }
            }
            Op::Abs(a) => unary(grads, *a, val(*a), g, |x, gv| gv * sign(x)),
            Op::Relu(a) => unary(grads, *a, val(*a), g, |x, gv| if x > 0.0 { gv } else { 0.0 }),
            Op::Elu(a) => unary(grads, *a, val(*a), g, |x, gv| if x > 0.0 { gv } else { gv * x.exp() }),
            Op::Log(a) => unary(grads, *a, val(*a), g, |x, gv| gv / x),
            Op::AsymAbs(a, rho) => unary(grads, *a, val(*a), g, |x, gv| if x >= 0.0 { gv * rho } else { -gv }),
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let (r, c) = (y.rows(), y.cols());
                let da = slot(grads, *a, val(*a));
                for row in 0..r {
                    let ys = &y.data()[row * c..(row + 1) * c];
                    let gs = &g.data()[row * c..(row + 1) * c];
                    let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                    let ds = &mut da.data_mut()[row * c..(row + 1) * c];
                    for j in 0..c {
                        ds[j] += ys[j] * (gs[j] - dot);
                    }
                }
            }
            Op::Sum(a) => {
                let gv = g.item();
                unary(grads, *a, val(*a), g, |_, _| gv);
            }
            Op::SumAxis(a, axis) => {
                let (r, c) = (val(*a).rows(), val(*a).cols());
                let da = slot(grads, *a, val(*a));
                let dd = da.data_mut();
                for x in 0..r {
                    for y in 0..c {
                        dd[x * c + y] += match axis {
                            Axis::Rows => g.data()[y],
                            Axis::Cols => g.data()[x],
                        };
                    }
                }
            }
            Op::Trace(a) => {
                let n = val(*a).rows();
                let gv = g.item();
                let da = slot(grads, *a, val(*a));
                for d in 0..n {
                    da.data_mut()[d * n + d] += gv;
                }
            }
            Op::Frobenius(a) => {
                let norm = node.value.item();
                if norm >= FROBENIUS_GUARD {
                    let gv = g.item();
                    unary(grads, *a, val(*a), g, |x, _| gv * x / norm);
                }
            }
            Op::SparseMatMul(m, x) => {
                if !self.nodes[x.0].needs_grad {
                    return;
                }
                let width = val(*x).cols();
                let dx = slot(grads, *x, val(*x));
                m.mul_dense_transposed_into(g.data(), width, dx.data_mut());
            }
            Op::RowGather(a, index) => {
                let c = val(*a).cols();
                let da = slot(grads, *a, val(*a));
                for (out_row, &src_row) in index.iter().enumerate() {
                    let gs = &g.data()[out_row * c..(out_row + 1) * c];
                    let ds = &mut da.data_mut()[src_row * c..(src_row + 1) * c];
                    for (d, s) in ds.iter_mut().zip(gs) {
                        *d += s;
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let gv = g.item();
                let c = probs.cols();
                let dl = slot(grads, *logits, val(*logits));
                for (k, (d, p)) in dl.data_mut().iter_mut().zip(probs.data()).enumerate() {
                    let onehot = if labels[k / c] == k % c { 1.0 } else { 0.0 };
                    *d += gv * (p - onehot);
                }
            }
        }
    }

    /// First non-smooth input (abs, asymmetric-abs, relu) lying within
    /// `radius` of its kink at an entry that receives gradient.
    pub fn find_kink(&self, grads: &Gradients, radius: f64) -> Option<(&'static str, f64)> {
        for (i, node) in self.nodes.iter().enumerate() {
            let input = match &node.op {
                Op::Abs(a) | Op::AsymAbs(a, _) | Op::Relu(a) => *a,
                _ => continue,
            };
            let Some(g) = grads.grads[i].as_ref() else { continue };
            for (x, gv) in self.value(input).data().iter().zip(g.data()) {
                if x.abs() <= radius && *gv != 0.0 {
                    return Some((node.op.name(), *x));
                }
            }
        }
        None
    }
}

pub(crate) fn asym_abs(x: f64, rho: f64) -> f64 {
    if x >= 0.0 {
        rho * x
    } else {
        -x
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, like: &Tensor) -> &'a mut Tensor {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

fn unary(grads: &mut [Option<Tensor>], a: NodeId, va: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) {
    let da = slot(grads, a, va);
    for ((d, &x), &gv) in da.data_mut().iter_mut().zip(va.data()).zip(g.data().iter().cycle()) {
        *d += f(x, gv);
    }
}

/// Gradient for an operand of an additive op; a scalar operand receives the
/// summed output gradient.
fn accumulate_broadcast(
    grads: &mut [Option<Tensor>],
    id: NodeId,
    v: &Tensor,
    g: &Tensor,
    f: impl Fn(f64, f64, f64) -> f64,
) {
    let d = slot(grads, id, v);
    if v.shape() == g.shape() {
        for (dv, &gv) in d.data_mut().iter_mut().zip(g.data()) {
            *dv += f(0.0, 0.0, gv);
        }
    } else {
        d.data_mut()[0] += g.data().iter().map(|&gv| f(0.0, 0.0, gv)).sum::<f64>();
    }
}

/// Gradient for operand `v` of a product/quotient with partner `other`.
/// `f(self_value, other_value, out_grad)` gives the per-entry contribution.
fn accumulate_pair(
    grads: &mut [Option<Tensor>],
    id: NodeId,
    v: &Tensor,
    other: &Tensor,
    g: &Tensor,
    f: impl Fn(f64, f64, f64) -> f64,
) {
    let n = g.len();
    let at = |t: &Tensor, k: usize| if t.len() == n { t.data()[k] } else { t.data()[0] };
    let d = slot(grads, id, v);
    if v.len() == n && v.shape() == g.shape() {
        for k in 0..n {
            d.data_mut()[k] += f(at(v, k), at(other, k), g.data()[k]);
        }
    } else {
        let total: f64 = (0..n).map(|k| f(at(v, k), at(other, k), g.data()[k])).sum();
        d.data_mut()[0] += total;
    }
}

/// Output of [`Tape::backward`]: the gradient of the loss with respect to
/// every recorded node that it reaches and that depends on a trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `id`, or `None` when the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`; zeros of the node's shape when unreachable.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape()))
    }

    /// Gradients for every trainable leaf of `tape`, in recording order.
    pub fn params(&self, tape: &Tape) -> Vec<(NodeId, Tensor)> {
        tape.params().into_iter().map(|id| (id, self.wrt(tape, id))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_param(tape: &mut Tape, v: &[f64]) -> NodeId {
        tape.param(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn abs_forward_and_sign_convention() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[-2.0, 0.0, 3.0]);
        let y = tape.abs(x).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 0.0, 3.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn matmul_forward() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
        assert_eq!(tape.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn asym_abs_values_and_grads() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[-1.0, 4.0]);
        let y = tape.asym_abs(x, 2.0).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 8.0]);
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[-1.0, 2.0]);
    }

    #[test]
    fn asym_abs_zero_takes_nonnegative_branch() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[0.0]);
        let y = tape.asym_abs(x, 3.0).unwrap();
        let s = tape.sum(y).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(&tape, x).data(), &[3.0]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[0.3, -1.0, 2.0]);
        let s = tape.sum(x).unwrap();
        assert_eq!(tape.backward(s).unwrap().wrt(&tape, x).data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_trace_of_gram_has_gradient_x() {
        let mut tape = Tape::new();
        let xv = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![4.0, 0.0]]).unwrap();
        let x = tape.param(xv.clone());
        let xt = tape.transpose(x).unwrap();
        let gram = tape.matmul(xt, x).unwrap();
        let tr = tape.trace(gram).unwrap();
        let loss = tape.scale(tr, 0.5).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(&tape, x).max_abs_diff(&xv) < 1e-14);
    }

    #[test]
    fn frobenius_gradient_and_guard() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
        let n = tape.frobenius(x).unwrap();
        assert_eq!(tape.value(n).item(), 5.0);
        let g = tape.backward(n).unwrap().wrt(&tape, x);
        assert!((g.data()[0] - 0.6).abs() < 1e-15 && (g.data()[1] - 0.8).abs() < 1e-15);

        let mut tape = Tape::new();
        let z = tape.param(Tensor::zeros(&[2, 2]));
        let n = tape.frobenius(z).unwrap();
        assert_eq!(tape.backward(n).unwrap().wrt(&tape, z), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unreachable_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[1.0, 2.0]);
        let unused = tape.param(Tensor::filled(&[2, 3], 1.0));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(&tape, unused), Tensor::zeros(&[2, 3]));
        assert_eq!(g.params(&tape).len(), 2);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = vec_param(&mut tape, &[0.0]);
        assert!(matches!(tape.log(x), Err(Error::NonFiniteValue { op: "log" })));
        let y = vec_param(&mut tape, &[1.0]);
        assert!(matches!(tape.div(y, x), Err(Error::NonFiniteValue { .. })));
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2, 3]));
        let b = tape.param(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let c = tape.param(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn scalar_broadcast_sums_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::filled(&[2, 2], 2.0));
        let s = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, s).unwrap();
        let l = tape.sum(y).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(&tape, s).item(), 8.0);
        assert_eq!(g.wrt(&tape, x).data(), &[3.0; 4]);
    }

    #[test]
    fn cross_entropy_values() {
        let mut tape = Tape::new();
        let z = tape.param(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        let l = tape.softmax_cross_entropy(z, vec![0].into()).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let z = tape.param(Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap());
        let l = tape.softmax_cross_entropy(z, vec![2].into()).unwrap();
        assert!((tape.value(l).item() - 0.407_605_964_445_2).abs() < 1e-12);
        assert!(matches!(
            tape.softmax_cross_entropy(z, vec![3].into()),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }
}
