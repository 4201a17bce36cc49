//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is a Wengert list: every op evaluates eagerly when it is
//! recorded, caching its output, and parents always precede children. The
//! recorded graph can be replayed with new leaf values ([`Graph::forward`])
//! which is what the finite-difference checker relies on.
//!
//! Leaves come in three flavours. Parameters are named and receive
//! gradients, inputs are named and receive gradients (useful for checks),
//! constants never do. Data batches and reparameterization noise are
//! recorded as constants.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input(String),
    Param(String),
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Log,
    Square,
    Sigmoid,
    Relu,
    Swish,
    Tanh,
    Softplus,
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// Sum over one axis (dropping it), or over everything when `None`.
    Sum(Option<usize>),
    Mean(Option<usize>),
    LogSoftmax,
    LogSumExp,
    Concat,
    Slice {
        start: usize,
        len: usize,
    },
    AddBias,
    StopGradient,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant => "constant",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "subtract",
            Op::Mul => "multiply",
            Op::Neg => "negate",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sigmoid => "sigmoid",
            Op::Relu => "relu",
            Op::Swish => "swish",
            Op::Tanh => "tanh",
            Op::Softplus => "softplus",
            Op::Clamp { .. } => "clamp",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::LogSoftmax => "log_softmax",
            Op::LogSumExp => "logsumexp",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
            Op::AddBias => "add_bias",
            Op::StopGradient => "stop_gradient",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input(_) | Op::Param(_) | Op::Constant)
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    parents: Vec<NodeId>,
    value: Tensor,
    requires_grad: bool,
    tag: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
    fault: Option<(String, f64)>,
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

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].parents
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Attach a human-readable name used in error messages.
    pub fn tag(&mut self, id: NodeId, name: impl Into<String>) {
        self.nodes[id.0].tag = Some(name.into());
    }

    fn describe(&self, i: usize) -> String {
        let node = &self.nodes[i];
        match &node.tag {
            Some(t) => format!("node {i} `{t}` ({})", node.op.kind()),
            None => format!("node {i} ({})", node.op.kind()),
        }
    }

    /// Scale the backward contribution of every op of `kind` by `factor`.
    /// Only used to prove that the gradient checker notices broken rules.
    #[doc(hidden)]
    pub fn inject_gradient_fault(&mut self, kind: &str, factor: f64) {
        self.fault = Some((kind.to_string(), factor));
    }

    fn push_leaf(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            parents: Vec::new(),
            value,
            requires_grad,
            tag: None,
        });
        id
    }

    pub fn input(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.push_leaf(Op::Input(name.into()), value, true)
    }

    /// Named trainable leaf. Recording the same name twice returns the
    /// existing node.
    pub fn param(&mut self, name: &str, value: &Tensor) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push_leaf(Op::Param(name.to_string()), value.clone(), true);
        self.params.insert(name.to_string(), id);
        id
    }

    pub fn param_id(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Op::Constant, value, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    fn push_op(&mut self, op: Op, parents: Vec<NodeId>) -> Result<NodeId> {
        let i = self.nodes.len();
        let value = {
            let inputs: Vec<&Tensor> = parents.iter().map(|p| &self.nodes[p.0].value).collect();
            eval(&op, &inputs).map_err(|d| Error::shape(format!("node {i} ({})", op.kind()), d))?
        };
        if !value.is_finite() {
            return Err(Error::NonFinite {
                node: format!("node {i} ({})", op.kind()),
            });
        }
        let requires_grad = !matches!(op, Op::StopGradient)
            && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            op,
            parents,
            value,
            requires_grad,
            tag: None,
        });
        Ok(NodeId(i))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push_op(Op::MatMul, vec![a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push_op(Op::Add, vec![a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push_op(Op::Sub, vec![a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push_op(Op::Mul, vec![a, b])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Neg, vec![a])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push_op(Op::Scale(c), vec![a])
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push_op(Op::AddScalar(c), vec![a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Exp, vec![a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Log, vec![a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Square, vec![a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Sigmoid, vec![a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Relu, vec![a])
    }
    pub fn swish(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Swish, vec![a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Tanh, vec![a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::Softplus, vec![a])
    }
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.push_op(Op::Clamp { lo, hi }, vec![a])
    }
    pub fn sum(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.push_op(Op::Sum(axis), vec![a])
    }
    pub fn mean(&mut self, a: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.push_op(Op::Mean(axis), vec![a])
    }
    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: NodeId) -> Result<NodeId> {
        let rank = self.value(a).rank();
        if rank == 0 {
            return Err(Error::shape("sum_last", "scalar has no last axis"));
        }
        self.sum(a, Some(rank - 1))
    }
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::LogSoftmax, vec![a])
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::LogSumExp, vec![a])
    }
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push_op(Op::Concat, parts.to_vec())
    }
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push_op(Op::Slice { start, len }, vec![a])
    }
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push_op(Op::AddBias, vec![x, bias])
    }
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        self.push_op(Op::StopGradient, vec![a])
    }

    /// Replace leaf values by name and re-evaluate every op node in order.
    /// Names not present in `inputs` keep their current values.
    pub fn forward(&mut self, inputs: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, value) in inputs {
            let idx = self
                .nodes
                .iter()
                .position(|n| matches!(&n.op, Op::Input(s) if s == name))
                .ok_or_else(|| Error::contract(format!("graph has no input named `{name}`")))?;
            self.set_leaf(NodeId(idx), value.clone())?;
        }
        self.recompute()
    }

    /// Overwrite a leaf's value without re-evaluating.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let i = id.0;
        if !self.nodes[i].op.is_leaf() {
            return Err(Error::contract(format!(
                "{} is not a leaf",
                self.describe(i)
            )));
        }
        if self.nodes[i].value.shape() != value.shape() {
            return Err(Error::shape(
                self.describe(i),
                format!(
                    "expected shape {:?}, got {:?}",
                    self.nodes[i].value.shape(),
                    value.shape()
                ),
            ));
        }
        self.nodes[i].value = value;
        Ok(())
    }

    pub fn recompute(&mut self) -> Result<()> {
        self.recompute_with(false)
    }

    /// Like [`Graph::recompute`], but `stop_gradient` nodes keep their
    /// current values. Finite differences taken this way differentiate the
    /// same function that [`Graph::backward`] does.
    pub fn recompute_frozen(&mut self) -> Result<()> {
        self.recompute_with(true)
    }

    fn recompute_with(&mut self, freeze: bool) -> Result<()> {
        for i in 0..self.nodes.len() {
            if self.nodes[i].op.is_leaf() || (freeze && self.nodes[i].op == Op::StopGradient) {
                continue;
            }
            let value = {
                let node = &self.nodes[i];
                let inputs: Vec<&Tensor> = node
                    .parents
                    .iter()
                    .map(|p| &self.nodes[p.0].value)
                    .collect();
                eval(&node.op, &inputs).map_err(|d| Error::shape(self.describe(i), d))?
            };
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    node: self.describe(i),
                });
            }
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Gradients of the scalar node `output` with respect to every leaf that
    /// requires them.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if !out.value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar output, {} has shape {:?}",
                self.describe(output.0),
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::full(out.value.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if node.op.is_leaf() || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let parents: Vec<&Tensor> = node
                .parents
                .iter()
                .map(|p| &self.nodes[p.0].value)
                .collect();
            let wants: Vec<bool> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].requires_grad)
                .collect();
            let mut contribs = vjp(&node.op, &parents, &node.value, &g, &wants);
            if let Some((kind, factor)) = &self.fault {
                if node.op.kind() == kind {
                    for c in contribs.iter_mut().flatten() {
                        c.data_mut().iter_mut().for_each(|x| *x *= factor);
                    }
                }
            }
            for (p, contrib) in node.parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                match &mut grads[p.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let mut leaves = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            let name = match &node.op {
                Op::Param(n) => LeafName::Param(n.clone()),
                Op::Input(n) => LeafName::Input(n.clone()),
                _ => continue,
            };
            let g = grads[i]
                .take()
                .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
            leaves.insert(name, (NodeId(i), g));
        }
        Ok(Gradients { leaves })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum LeafName {
    Param(String),
    Input(String),
}

/// Gradients of one scalar with respect to the graph's named leaves. Leaves
/// the output does not depend on get exact zeros.
#[derive(Clone, Debug)]
pub struct Gradients {
    leaves: BTreeMap<LeafName, (NodeId, Tensor)>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.leaves
            .get(&LeafName::Param(name.to_string()))
            .map(|(_, g)| g)
    }

    pub fn input(&self, name: &str) -> Option<&Tensor> {
        self.leaves
            .get(&LeafName::Input(name.to_string()))
            .map(|(_, g)| g)
    }

    pub fn node(&self, id: NodeId) -> Option<&Tensor> {
        self.leaves.values().find(|(n, _)| *n == id).map(|(_, g)| g)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.leaves.iter().filter_map(|(k, (_, g))| match k {
            LeafName::Param(n) => Some((n.as_str(), g)),
            LeafName::Input(_) => None,
        })
    }

    pub fn into_param_map(self) -> BTreeMap<String, Tensor> {
        self.leaves
            .into_iter()
            .filter_map(|(k, (_, g))| match k {
                LeafName::Param(n) => Some((n, g)),
                LeafName::Input(_) => None,
            })
            .collect()
    }

    /// Every differentiable leaf as `(node, label, gradient)`.
    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, String, &Tensor)> {
        self.leaves.iter().map(|(k, (id, g))| {
            let label = match k {
                LeafName::Param(n) => n.clone(),
                LeafName::Input(n) => format!("input:{n}"),
            };
            (*id, label, g)
        })
    }
}

// ---------------------------------------------------------------------------
// forward rules

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn same_shape(a: &Tensor, b: &Tensor) -> std::result::Result<(), String> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(format!(
            "operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        ))
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

/// (outer, n, inner) decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduce_shape(shape: &[usize], axis: Option<usize>) -> std::result::Result<Vec<usize>, String> {
    match axis {
        None => Ok(Vec::new()),
        Some(a) if a < shape.len() => {
            let mut s = shape.to_vec();
            s.remove(a);
            Ok(s)
        }
        Some(a) => Err(format!("axis {a} out of range for shape {shape:?}")),
    }
}

fn last_dim(t: &Tensor) -> std::result::Result<usize, String> {
    t.shape()
        .last()
        .copied()
        .ok_or_else(|| "op needs rank >= 1".to_string())
}

fn eval(op: &Op, x: &[&Tensor]) -> std::result::Result<Tensor, String> {
    let unary = |f: &dyn Fn(f64) -> f64| x[0].map(f);
    Ok(match op {
        Op::Input(_) | Op::Param(_) | Op::Constant => unreachable!("leaves are not evaluated"),
        Op::MatMul => {
            let (a, b) = (x[0], x[1]);
            if a.rank() != 2 || b.rank() != 2 {
                return Err(format!(
                    "matmul needs rank-2 operands, got {:?} and {:?}",
                    a.shape(),
                    b.shape()
                ));
            }
            let (m, k) = (a.shape()[0], a.shape()[1]);
            let (k2, n) = (b.shape()[0], b.shape()[1]);
            if k != k2 {
                return Err(format!(
                    "matmul inner dimensions differ: {:?} x {:?}",
                    a.shape(),
                    b.shape()
                ));
            }
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, &mut c);
            Tensor::new(vec![m, n], c).expect("shape")
        }
        Op::Add => {
            same_shape(x[0], x[1])?;
            zip_with(x[0], x[1], |a, b| a + b)
        }
        Op::Sub => {
            same_shape(x[0], x[1])?;
            zip_with(x[0], x[1], |a, b| a - b)
        }
        Op::Mul => {
            same_shape(x[0], x[1])?;
            zip_with(x[0], x[1], |a, b| a * b)
        }
        Op::Neg => unary(&|v| -v),
        Op::Scale(c) => unary(&|v| c * v),
        Op::AddScalar(c) => unary(&|v| v + c),
        Op::Exp => unary(&f64::exp),
        Op::Log => unary(&f64::ln),
        Op::Square => unary(&|v| v * v),
        Op::Sigmoid => unary(&sigmoid),
        Op::Relu => unary(&|v| v.max(0.0)),
        Op::Swish => unary(&|v| v * sigmoid(v)),
        Op::Tanh => unary(&f64::tanh),
        Op::Softplus => unary(&softplus),
        Op::Clamp { lo, hi } => unary(&|v| v.clamp(*lo, *hi)),
        Op::Sum(axis) | Op::Mean(axis) => {
            let t = x[0];
            let shape = reduce_shape(t.shape(), *axis)?;
            let (values, count) = match axis {
                None => (vec![t.sum()], t.len()),
                Some(a) => {
                    let (outer, n, inner) = axis_split(t.shape(), *a);
                    let mut out = vec![0.0; outer * inner];
                    let d = t.data();
                    for o in 0..outer {
                        for j in 0..n {
                            let base = (o * n + j) * inner;
                            for i in 0..inner {
                                out[o * inner + i] += d[base + i];
                            }
                        }
                    }
                    (out, n)
                }
            };
            let values = if matches!(op, Op::Mean(_)) {
                let inv = 1.0 / count as f64;
                values.into_iter().map(|v| v * inv).collect()
            } else {
                values
            };
            Tensor::new(shape, values).expect("shape")
        }
        Op::LogSoftmax => {
            let t = x[0];
            let w = last_dim(t)?;
            let mut out = t.data().to_vec();
            for row in out.chunks_mut(w) {
                let lse = logsumexp_slice(row);
                row.iter_mut().for_each(|v| *v -= lse);
            }
            Tensor::new(t.shape().to_vec(), out).expect("shape")
        }
        Op::LogSumExp => {
            let t = x[0];
            let w = last_dim(t)?;
            let out: Vec<f64> = t.data().chunks(w).map(logsumexp_slice).collect();
            Tensor::new(t.shape()[..t.rank() - 1].to_vec(), out).expect("shape")
        }
        Op::Concat => {
            if x.is_empty() {
                return Err("concat of nothing".into());
            }
            let lead = &x[0].shape()[..x[0].rank().saturating_sub(1)];
            let mut widths = Vec::with_capacity(x.len());
            for t in x {
                if t.rank() == 0 || &t.shape()[..t.rank() - 1] != lead {
                    return Err(format!(
                        "concat operands disagree on leading shape: {:?} vs {:?}",
                        x[0].shape(),
                        t.shape()
                    ));
                }
                widths.push(last_dim(t)?);
            }
            let total: usize = widths.iter().sum();
            let rows: usize = lead.iter().product();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (t, &w) in x.iter().zip(&widths) {
                    out.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Tensor::new(shape, out).expect("shape")
        }
        Op::Slice { start, len } => {
            let t = x[0];
            let w = last_dim(t)?;
            if *len == 0 || start + len > w {
                return Err(format!(
                    "slice {start}..{} out of range for width {w}",
                    start + len
                ));
            }
            let out: Vec<f64> = t
                .data()
                .chunks(w)
                .flat_map(|row| row[*start..start + len].iter().copied())
                .collect();
            let mut shape = t.shape().to_vec();
            *shape.last_mut().expect("rank >= 1") = *len;
            Tensor::new(shape, out).expect("shape")
        }
        Op::AddBias => {
            let (t, b) = (x[0], x[1]);
            let w = last_dim(t)?;
            if b.rank() != 1 || b.len() != w {
                return Err(format!(
                    "bias shape {:?} does not match last axis of {:?}",
                    b.shape(),
                    t.shape()
                ));
            }
            let mut out = t.data().to_vec();
            for row in out.chunks_mut(w) {
                for (v, bb) in row.iter_mut().zip(b.data()) {
                    *v += bb;
                }
            }
            Tensor::new(t.shape().to_vec(), out).expect("shape")
        }
        Op::StopGradient => x[0].clone(),
    })
}

pub(crate) fn logsumexp_slice(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// backward rules

fn vjp(op: &Op, x: &[&Tensor], y: &Tensor, g: &Tensor, wants: &[bool]) -> Vec<Option<Tensor>> {
    let elementwise = |f: &dyn Fn(usize) -> f64| -> Option<Tensor> {
        let data = (0..g.len()).map(|i| g.data()[i] * f(i)).collect();
        Some(Tensor::new(x[0].shape().to_vec(), data).expect("shape"))
    };
    let xd = x[0].data();
    let yd = y.data();
    match op {
        Op::Input(_) | Op::Param(_) | Op::Constant => vec![],
        Op::MatMul => {
            let (a, b) = (x[0], x[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let da = wants[0].then(|| {
                let mut d = vec![0.0; m * k];
                // dA = G · Bᵀ
                gemm(m, n, k, g.data(), false, b.data(), true, &mut d);
                Tensor::new(vec![m, k], d).expect("shape")
            });
            let db = wants[1].then(|| {
                let mut d = vec![0.0; k * n];
                // dB = Aᵀ · G
                gemm(k, m, n, a.data(), true, g.data(), false, &mut d);
                Tensor::new(vec![k, n], d).expect("shape")
            });
            vec![da, db]
        }
        Op::Add => vec![Some(g.clone()), Some(g.clone())],
        Op::Sub => vec![Some(g.clone()), Some(g.map(|v| -v))],
        Op::Mul => vec![
            wants[0].then(|| zip_with(g, x[1], |a, b| a * b)),
            wants[1].then(|| zip_with(g, x[0], |a, b| a * b)),
        ],
        Op::Neg => vec![Some(g.map(|v| -v))],
        Op::Scale(c) => vec![Some(g.map(|v| c * v))],
        Op::AddScalar(_) | Op::StopGradient => vec![Some(g.clone())],
        Op::Exp => vec![elementwise(&|i| yd[i])],
        Op::Log => vec![elementwise(&|i| 1.0 / xd[i])],
        Op::Square => vec![elementwise(&|i| 2.0 * xd[i])],
        Op::Sigmoid => vec![elementwise(&|i| yd[i] * (1.0 - yd[i]))],
        Op::Relu => vec![elementwise(&|i| if xd[i] > 0.0 { 1.0 } else { 0.0 })],
        Op::Swish => vec![elementwise(&|i| {
            let s = sigmoid(xd[i]);
            s + xd[i] * s * (1.0 - s)
        })],
        Op::Tanh => vec![elementwise(&|i| 1.0 - yd[i] * yd[i])],
        Op::Softplus => vec![elementwise(&|i| sigmoid(xd[i]))],
        Op::Clamp { lo, hi } => vec![elementwise(&|i| {
            if xd[i] >= *lo && xd[i] <= *hi {
                1.0
            } else {
                0.0
            }
        })],
        Op::Sum(axis) | Op::Mean(axis) => {
            let t = x[0];
            let mut out = vec![0.0; t.len()];
            let count = match axis {
                None => {
                    out.iter_mut().for_each(|v| *v = g.data()[0]);
                    t.len()
                }
                Some(a) => {
                    let (outer, n, inner) = axis_split(t.shape(), *a);
                    for o in 0..outer {
                        for j in 0..n {
                            let base = (o * n + j) * inner;
                            for i in 0..inner {
                                out[base + i] = g.data()[o * inner + i];
                            }
                        }
                    }
                    n
                }
            };
            if matches!(op, Op::Mean(_)) {
                let inv = 1.0 / count as f64;
                out.iter_mut().for_each(|v| *v *= inv);
            }
            vec![Some(Tensor::new(t.shape().to_vec(), out).expect("shape"))]
        }
        Op::LogSoftmax => {
            let w = *x[0].shape().last().expect("rank");
            let mut out = vec![0.0; g.len()];
            for ((o, gr), yr) in out.chunks_mut(w).zip(g.data().chunks(w)).zip(yd.chunks(w)) {
                let gs: f64 = gr.iter().sum();
                for j in 0..w {
                    o[j] = gr[j] - yr[j].exp() * gs;
                }
            }
            vec![Some(
                Tensor::new(x[0].shape().to_vec(), out).expect("shape"),
            )]
        }
        Op::LogSumExp => {
            let w = *x[0].shape().last().expect("rank");
            let mut out = vec![0.0; x[0].len()];
            for (r, (o, xr)) in out.chunks_mut(w).zip(xd.chunks(w)).enumerate() {
                for j in 0..w {
                    o[j] = g.data()[r] * (xr[j] - yd[r]).exp();
                }
            }
            vec![Some(
                Tensor::new(x[0].shape().to_vec(), out).expect("shape"),
            )]
        }
        Op::Concat => {
            let widths: Vec<usize> = x.iter().map(|t| *t.shape().last().expect("rank")).collect();
            let total: usize = widths.iter().sum();
            let rows = g.len() / total;
            let mut offset = 0;
            let mut outs = Vec::with_capacity(x.len());
            for (t, &w) in x.iter().zip(&widths) {
                let mut d = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                }
                offset += w;
                outs.push(Some(Tensor::new(t.shape().to_vec(), d).expect("shape")));
            }
            outs
        }
        Op::Slice { start, len } => {
            let w = *x[0].shape().last().expect("rank");
            let mut out = vec![0.0; x[0].len()];
            for (o, gr) in out.chunks_mut(w).zip(g.data().chunks(*len)) {
                o[*start..start + len].copy_from_slice(gr);
            }
            vec![Some(
                Tensor::new(x[0].shape().to_vec(), out).expect("shape"),
            )]
        }
        Op::AddBias => {
            let w = x[1].len();
            let db = wants[1].then(|| {
                let mut d = vec![0.0; w];
                for row in g.data().chunks(w) {
                    for (a, b) in d.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                Tensor::vector(d)
            });
            vec![Some(g.clone()), db]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = g.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.constant(m(&[&[1.0], &[1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &m(&[&[3.0], &[7.0]]));
    }

    #[test]
    fn swish_at_zero_and_log_softmax_symmetry() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::vector(vec![0.0]));
        let s = g.swish(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.0]);
        let v = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let ls = g.log_softmax(v).unwrap();
        let ln2 = std::f64::consts::LN_2;
        for &x in g.value(ls).data() {
            assert!((x + ln2).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_names_the_node() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("node 2"), "{err}");
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![-1.0]));
        let err = g.log(a).unwrap_err();
        assert!(
            matches!(err, Error::NonFinite { ref node } if node.contains("log")),
            "{err}"
        );
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::scalar(3.0));
        let y = g.square(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.input("x").unwrap().item(), 6.0);
    }

    #[test]
    fn stop_gradient_detaches_one_factor() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::scalar(2.0));
        let sx = g.stop_gradient(x).unwrap();
        let y = g.mul(sx, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.input("x").unwrap().item(), 2.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::vector(vec![1.0, 2.0]));
        let y = g.exp(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_params_get_exact_zeros() {
        let mut g = Graph::new();
        let w = g.param("w", &Tensor::vector(vec![1.0, 2.0]));
        let _ = g.exp(w).unwrap();
        let x = g.input("x", Tensor::scalar(1.0));
        let y = g.square(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.param("w").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_replays_with_new_inputs() {
        let mut g = Graph::new();
        let x = g.input("x", Tensor::vector(vec![1.0, 2.0]));
        let y = g.square(x).unwrap();
        let s = g.sum(y, None).unwrap();
        assert_eq!(g.value(s).item(), 5.0);
        let mut inputs = BTreeMap::new();
        inputs.insert("x".to_string(), Tensor::vector(vec![3.0, 4.0]));
        g.forward(&inputs).unwrap();
        assert_eq!(g.value(s).item(), 25.0);
        inputs.insert("nope".to_string(), Tensor::scalar(0.0));
        assert!(g.forward(&inputs).is_err());
    }

    #[test]
    fn reductions_over_axes() {
        let mut g = Graph::new();
        let x = g.constant(m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let s0 = g.sum(x, Some(0)).unwrap();
        let m1 = g.mean(x, Some(1)).unwrap();
        assert_eq!(g.value(s0).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(g.value(m1).data(), &[2.0, 5.0]);
        assert_eq!(g.value(m1).shape(), &[2]);
    }

    #[test]
    fn concat_slice_bias() {
        let mut g = Graph::new();
        let a = g.constant(m(&[&[1.0], &[2.0]]));
        let b = g.constant(m(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = g.slice(c, 1, 2).unwrap();
        assert_eq!(g.value(s), g.value(b));
        let bias = g.constant(Tensor::vector(vec![10.0, 20.0]));
        let r = g.add_bias(s, bias).unwrap();
        assert_eq!(g.value(r).data(), &[13.0, 24.0, 15.0, 26.0]);
    }
}
