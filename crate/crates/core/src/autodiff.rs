//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation records its
//! inputs, so nodes are stored in topological order and the backward pass is
//! a single reverse sweep. Graphs are cheap to build and are thrown away after
//! each training example.
//!
//! ```
//! use xltag::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![3.0]));
//! let y = g.mul(x, x).unwrap();
//! let root = g.sum(y).unwrap();
//! let grads = g.backward(root).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
//! ```

use crate::error::{Error, Result};

/// Probability floor used by [`Graph::cross_entropy`] when the target
/// probability underflows to zero.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Tensor(format!(
                "shape {shape:?} must have positive dimensions"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Tensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// 1-D tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector tensor");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation tag together with any non-tensor arguments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Mul,
    Concat,
    Tanh,
    Sigmoid,
    Softmax,
    /// Select one row of a 2-D table.
    LookupRow(usize),
    Slice { start: usize, len: usize },
    Sum,
    Scale(f64),
    Log,
    /// Negative log-probability of the target index.
    CrossEntropy(usize),
}

impl OpKind {
    fn name(&self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Concat => "concat",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::LookupRow(_) => "lookup_row",
            OpKind::Slice { .. } => "slice",
            OpKind::Sum => "sum",
            OpKind::Scale(_) => "scale",
            OpKind::Log => "log",
            OpKind::CrossEntropy(_) => "cross_entropy",
        }
    }
}

struct Node {
    value: Tensor,
    op: OpKind,
    inputs: Vec<NodeId>,
    needs_grad: bool,
    // Cross-entropy only: target probability was floored.
    clamped: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    clamp_events: usize,
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

    /// Trainable leaf; receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, OpKind::Leaf, Vec::new(), true, false)
    }

    /// Leaf that is excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, OpKind::Leaf, Vec::new(), false, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    /// Number of cross-entropy evaluations whose target probability had to be
    /// floored at [`PROB_FLOOR`].
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    fn push(
        &mut self,
        value: Tensor,
        op: OpKind,
        inputs: Vec<NodeId>,
        needs_grad: bool,
        clamped: bool,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            inputs,
            needs_grad,
            clamped,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: OpKind, inputs: Vec<NodeId>) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.push(value, op, inputs, needs_grad, false)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> Error {
        Error::Shape {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    /// Generic entry point: apply `op` to `inputs`.
    pub fn apply(&mut self, op: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} takes {n} input(s), got {}",
                    op.name(),
                    inputs.len()
                )))
            }
        };
        match op {
            OpKind::Leaf => Err(Error::invalid("leaf nodes are created with param/constant")),
            OpKind::Concat => self.concat(inputs),
            OpKind::MatMul | OpKind::Add | OpKind::Mul => {
                arity(2)?;
                let (a, b) = (inputs[0], inputs[1]);
                match op {
                    OpKind::MatMul => self.matmul(a, b),
                    OpKind::Add => self.add(a, b),
                    _ => self.mul(a, b),
                }
            }
            _ => {
                arity(1)?;
                let a = inputs[0];
                match op {
                    OpKind::Tanh => self.tanh(a),
                    OpKind::Sigmoid => self.sigmoid(a),
                    OpKind::Softmax => self.softmax(a),
                    OpKind::LookupRow(r) => self.lookup_row(a, r),
                    OpKind::Slice { start, len } => self.slice(a, start, len),
                    OpKind::Sum => self.sum(a),
                    OpKind::Scale(c) => self.scale(a, c),
                    OpKind::Log => self.log(a),
                    OpKind::CrossEntropy(t) => self.cross_entropy(a, t),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Matrix product. Accepts `[m, n] x [n]` (matrix-vector) and
    /// `[m, n] x [n, p]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, n) = (sa[0], sa[1]);
        let p = if sb.len() == 2 { sb[1] } else { 1 };
        let out_shape = if sb.len() == 2 { vec![m, p] } else { vec![m] };
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let arow = &av[i * n..(i + 1) * n];
            if p == 1 {
                out[i] = dot(arow, bv);
            } else {
                let orow = &mut out[i * p..(i + 1) * p];
                for (k, &aik) in arow.iter().enumerate() {
                    let brow = &bv[k * p..(k + 1) * p];
                    for (o, &bkj) in orow.iter_mut().zip(brow) {
                        *o += aik * bkj;
                    }
                }
            }
        }
        let value = Tensor {
            shape: out_shape,
            data: out,
        };
        Ok(self.record(value, OpKind::MatMul, vec![a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let value = Tensor {
            shape: av.shape.clone(),
            data,
        };
        Ok(self.record(value, OpKind::Add, vec![a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let value = Tensor {
            shape: av.shape.clone(),
            data,
        };
        Ok(self.record(value, OpKind::Mul, vec![a, b]))
    }

    /// Concatenation of 1-D tensors.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat needs at least one input"));
        }
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).len() != 1) {
            return Err(self.mismatch("concat", parts[0], bad));
        }
        let total = parts.iter().map(|&p| self.nodes[p.0].value.len()).sum();
        let mut data = Vec::with_capacity(total);
        for &p in parts {
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        Ok(self.record(Tensor::vector(data), OpKind::Concat, parts.to_vec()))
    }

    fn unary(&mut self, a: NodeId, op: OpKind, f: impl Fn(f64) -> f64) -> NodeId {
        let av = &self.nodes[a.0].value;
        let value = Tensor {
            shape: av.shape.clone(),
            data: av.data.iter().map(|&x| f(x)).collect(),
        };
        self.record(value, op, vec![a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        Ok(self.unary(a, OpKind::Tanh, f64::tanh))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        Ok(self.unary(a, OpKind::Sigmoid, sigmoid))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if self.nodes[a.0].value.data.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("log of a non-positive value"));
        }
        Ok(self.unary(a, OpKind::Log, f64::ln))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        Ok(self.unary(a, OpKind::Scale(c), |x| c * x))
    }

    /// Softmax over all elements of `a`, stabilized by max subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = &self.nodes[a.0].value;
        let mut data = av.data.clone();
        softmax_in_place(&mut data);
        let value = Tensor {
            shape: av.shape.clone(),
            data,
        };
        Ok(self.record(value, OpKind::Softmax, vec![a]))
    }

    pub fn lookup_row(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let s = self.shape(table);
        if s.len() != 2 || row >= s[0] {
            return Err(Error::Shape {
                op: "lookup_row",
                left: s.to_vec(),
                right: vec![row],
            });
        }
        let data = self.nodes[table.0].value.row(row).to_vec();
        Ok(self.record(Tensor::vector(data), OpKind::LookupRow(row), vec![table]))
    }

    /// Contiguous sub-range of a 1-D tensor.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 1 || len == 0 || start + len > s[0] {
            return Err(Error::Shape {
                op: "slice",
                left: s.to_vec(),
                right: vec![start, len],
            });
        }
        let data = self.nodes[a.0].value.data[start..start + len].to_vec();
        Ok(self.record(Tensor::vector(data), OpKind::Slice { start, len }, vec![a]))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let total = self.nodes[a.0].value.data.iter().sum();
        Ok(self.record(Tensor::scalar(total), OpKind::Sum, vec![a]))
    }

    /// `-log probs[target]`. `probs` must be a probability vector; a zero at
    /// the target index is floored at [`PROB_FLOOR`] and counted in
    /// [`Graph::clamp_events`].
    pub fn cross_entropy(&mut self, probs: NodeId, target: usize) -> Result<NodeId> {
        let p = &self.nodes[probs.0].value;
        if p.shape.len() != 1 || target >= p.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                left: p.shape.clone(),
                right: vec![target],
            });
        }
        if p.data.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("cross_entropy"));
        }
        if p.data.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("cross_entropy: negative probability"));
        }
        let total: f64 = p.data.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "cross_entropy: probabilities sum to {total}, not 1"
            )));
        }
        let pt = p.data[target];
        let clamped = pt <= 0.0;
        let loss = -pt.max(PROB_FLOOR).ln();
        if clamped {
            self.clamp_events += 1;
        }
        let needs_grad = self.nodes[probs.0].needs_grad;
        Ok(self.push(
            Tensor::scalar(loss),
            OpKind::CrossEntropy(target),
            vec![probs],
            needs_grad,
            clamped,
        ))
    }

    /// Reverse sweep from a scalar `root`. Gradients of nodes used more than
    /// once are summed over all uses.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || node.inputs.is_empty() {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| {
                    g.map(|data| Tensor {
                        shape: n.value.shape.clone(),
                        data,
                    })
                })
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let n = &nodes[id.0];
            if !n.needs_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; n.value.len()]);
            f(slot);
        };
        let y = &node.value.data;
        match node.op {
            OpKind::Leaf => {}
            OpKind::MatMul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (m, n) = (av.shape[0], av.shape[1]);
                let p = if bv.shape.len() == 2 { bv.shape[1] } else { 1 };
                acc(a, &mut |ga| {
                    for i in 0..m {
                        let grow = &g[i * p..(i + 1) * p];
                        for k in 0..n {
                            let brow = &bv.data[k * p..(k + 1) * p];
                            ga[i * n + k] += dot(grow, brow);
                        }
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..m {
                        let arow = &av.data[i * n..(i + 1) * n];
                        let grow = &g[i * p..(i + 1) * p];
                        for (k, &aik) in arow.iter().enumerate() {
                            let gbrow = &mut gb[k * p..(k + 1) * p];
                            for (o, &gij) in gbrow.iter_mut().zip(grow) {
                                *o += aik * gij;
                            }
                        }
                    }
                });
            }
            OpKind::Add => {
                for &inp in &node.inputs {
                    acc(inp, &mut |ga| add_assign(ga, g));
                }
            }
            OpKind::Mul => {
                let (a, b) = (node.inputs[0], node.inputs[1]);
                let av = &nodes[a.0].value.data;
                let bv = &nodes[b.0].value.data;
                acc(a, &mut |ga| {
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                });
                acc(b, &mut |gb| {
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                });
            }
            OpKind::Concat => {
                let mut offset = 0;
                for &inp in &node.inputs {
                    let len = nodes[inp.0].value.len();
                    acc(inp, &mut |ga| add_assign(ga, &g[offset..offset + len]));
                    offset += len;
                }
            }
            OpKind::Tanh => acc(node.inputs[0], &mut |ga| {
                for ((o, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * (1.0 - yi * yi);
                }
            }),
            OpKind::Sigmoid => acc(node.inputs[0], &mut |ga| {
                for ((o, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *o += gi * yi * (1.0 - yi);
                }
            }),
            OpKind::Softmax => {
                let inner = dot(g, y);
                acc(node.inputs[0], &mut |ga| {
                    for ((o, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += yi * (gi - inner);
                    }
                });
            }
            OpKind::LookupRow(r) => {
                let cols = y.len();
                acc(node.inputs[0], &mut |gt| {
                    add_assign(&mut gt[r * cols..(r + 1) * cols], g)
                });
            }
            OpKind::Slice { start, len } => acc(node.inputs[0], &mut |ga| {
                add_assign(&mut ga[start..start + len], g)
            }),
            OpKind::Sum => acc(node.inputs[0], &mut |ga| {
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }),
            OpKind::Scale(c) => acc(node.inputs[0], &mut |ga| {
                for (o, gi) in ga.iter_mut().zip(g) {
                    *o += c * gi;
                }
            }),
            OpKind::Log => {
                let xv = &nodes[node.inputs[0].0].value.data;
                acc(node.inputs[0], &mut |ga| {
                    for ((o, gi), xi) in ga.iter_mut().zip(g).zip(xv) {
                        *o += gi / xi;
                    }
                });
            }
            OpKind::CrossEntropy(t) => {
                if node.clamped {
                    return;
                }
                let p = nodes[node.inputs[0].0].value.data[t];
                acc(node.inputs[0], &mut |ga| ga[t] -= g[0] / p);
            }
        }
    }
}

/// Result of [`Graph::backward`]: one optional gradient per node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `id`, or `None` when the root does
    /// not depend on `id` or `id` is a constant.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
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

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
