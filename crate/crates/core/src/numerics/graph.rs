//! Reverse-mode differentiation over an append-only operation graph.
//!
//! Nodes are appended in evaluation order, so every input id precedes its
//! consumer and insertion order is a topological order. The backward pass
//! walks nodes in exact reverse insertion order and every reduction sums
//! left to right, which makes outputs and gradients bit-reproducible.

use std::collections::HashMap;

use super::{Param, ParamId, Scalar, Tensor};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(S),
    Offset(S),
    MatMul,
    Transpose,
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
    Sqrt,
    Sum,
    Mean,
    SumAxis(usize),
    MeanAxis(usize),
    Softmax(usize),
    LayerNorm { axis: usize },
    GaussianLogProb,
    Minimum,
    Clamp { lo: S, hi: S },
    SliceCols { start: usize },
    ConcatCols,
    ConcatRows,
    Reshape,
}

impl<S> Op<S> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Scale(_) => "scale",
            Op::Offset(_) => "offset",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis(_) => "sum_axis",
            Op::MeanAxis(_) => "mean_axis",
            Op::Softmax(_) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GaussianLogProb => "gaussian_log_prob",
            Op::Minimum => "minimum",
            Op::Clamp { .. } => "clamp",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols => "concat_cols",
            Op::ConcatRows => "concat_rows",
            Op::Reshape => "reshape",
        }
    }
}

struct Node<S> {
    op: Op<S>,
    inputs: Vec<NodeId>,
    value: Tensor<S>,
    requires_grad: bool,
    // Per-op saved values (layer_norm: reciprocal standard deviations).
    aux: Vec<S>,
}

/// Operation record with reverse-mode differentiation.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    bound: HashMap<ParamId, NodeId>,
    first_non_finite: Option<NodeId>,
    strict: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints of every node reached by one backward pass.
pub struct Gradients<S> {
    adjoints: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<S>> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Gradient for a node, or zeros shaped like it when the node is not
    /// connected to the differentiated output.
    pub fn get_or_zeros(&self, graph: &Graph<S>, id: NodeId) -> Tensor<S> {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.value(id).shape().to_vec()))
    }

    /// Gradient for a bound parameter; `None` when frozen, unbound or
    /// disconnected.
    pub fn param(&self, graph: &Graph<S>, p: &Param<S>) -> Option<&Tensor<S>> {
        graph.bound.get(&p.id()).and_then(|&id| self.get(id))
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(
        axis < shape.len(),
        "contract violation: axis {axis} out of range for shape {shape:?}"
    );
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        if da == db || db == 1 {
            out.push(da);
        } else if da == 1 {
            out.push(db);
        } else {
            return None;
        }
    }
    Some(out)
}

/// Flat source index for each flat index of `out`, or `None` when `src`
/// already has the output shape.
fn broadcast_map(src: &[usize], out: &[usize]) -> Option<Vec<usize>> {
    let total: usize = out.iter().product();
    let src_total: usize = src.iter().product();
    if src_total == total {
        return None;
    }
    let n = out.len();
    let off = n - src.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..src.len()).rev() {
        strides[i + off] = if src[i] == 1 { 0 } else { s };
        s *= src[i];
    }
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for d in (0..n).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

fn gather<S: Copy>(data: &[S], map: &Option<Vec<usize>>, i: usize) -> S {
    match map {
        Some(m) => data[m[i]],
        None => data[i],
    }
}

/// Sums an output-shaped gradient back onto a broadcast source.
fn reduce_to<S: Scalar>(g: &[S], map: &Option<Vec<usize>>, src_len: usize) -> Vec<S> {
    match map {
        None => g.to_vec(),
        Some(m) => {
            let mut out = vec![S::zero(); src_len];
            for (i, &v) in g.iter().enumerate() {
                out[m[i]] += v;
            }
            out
        }
    }
}

fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw<S: Copy>(a: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(a.len());
    for j in 0..cols {
        for i in 0..rows {
            out.push(a[i * cols + j]);
        }
    }
    out
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
            first_non_finite: None,
            strict: false,
        }
    }

    /// A graph that panics at the first operation producing NaN or Inf.
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// First node whose value contained NaN or Inf, if any.
    pub fn first_non_finite(&self) -> Option<NodeId> {
        self.first_non_finite
    }

    fn push(&mut self, op: Op<S>, inputs: Vec<NodeId>, value: Tensor<S>, aux: Vec<S>) -> NodeId {
        let requires_grad = match op {
            Op::Leaf => value.requires_grad(),
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        let id = NodeId(self.nodes.len());
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(id);
            if self.strict {
                panic!("non-finite value produced by {} (node {})", op.name(), id.0);
            }
        }
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
            aux,
        });
        id
    }

    /// Inserts a tensor; it participates in differentiation when its
    /// `requires_grad` flag is set.
    pub fn leaf(&mut self, t: Tensor<S>) -> NodeId {
        self.push(Op::Leaf, vec![], t, vec![])
    }

    pub fn constant(&mut self, t: Tensor<S>) -> NodeId {
        self.leaf(t.with_grad(false))
    }

    pub fn variable(&mut self, t: Tensor<S>) -> NodeId {
        self.leaf(t.with_grad(true))
    }

    /// Binds a parameter, reusing its leaf when already bound in this graph.
    pub fn param(&mut self, p: &Param<S>) -> NodeId {
        if let Some(&id) = self.bound.get(&p.id()) {
            return id;
        }
        let id = self.leaf(p.value.clone().with_grad(!p.frozen));
        self.bound.insert(p.id(), id);
        id
    }

    pub fn param_node(&self, p: &Param<S>) -> Option<NodeId> {
        self.bound.get(&p.id()).copied()
    }

    fn binary(&mut self, op: Op<S>, a: NodeId, b: NodeId, f: impl Fn(S, S) -> S) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out = broadcast_shape(&sa, &sb).unwrap_or_else(|| {
            panic!(
                "contract violation: {} shape mismatch {:?} vs {:?}",
                op.name(),
                sa,
                sb
            )
        });
        let ma = broadcast_map(&sa, &out);
        let mb = broadcast_map(&sb, &out);
        let total: usize = out.iter().product();
        let da = self.value(a).data();
        let db = self.value(b).data();
        let data = (0..total)
            .map(|i| f(gather(da, &ma, i), gather(db, &mb, i)))
            .collect();
        self.push(op, vec![a, b], Tensor::from_raw(out, data), vec![])
    }

    fn unary(&mut self, op: Op<S>, a: NodeId, f: impl Fn(S) -> S) -> NodeId {
        let value = self.value(a).map(f);
        self.push(op, vec![a], value, vec![])
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Div, a, b, |x, y| x / y)
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binary(Op::Minimum, a, b, |x, y| if x <= y { x } else { y })
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Neg, a, |x| -x)
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> NodeId {
        self.unary(Op::Scale(c), a, |x| x * c)
    }

    pub fn offset(&mut self, a: NodeId, c: S) -> NodeId {
        self.unary(Op::Offset(c), a, |x| x + c)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Tanh, a, |x| x.tanh())
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Relu, a, |x| if x > S::zero() { x } else { S::zero() })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Exp, a, |x| x.exp())
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Log, a, |x| x.ln())
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Square, a, |x| x * x)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(Op::Sqrt, a, |x| x.sqrt())
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the band.
    pub fn clamp(&mut self, a: NodeId, lo: S, hi: S) -> NodeId {
        assert!(lo <= hi, "contract violation: clamp bounds {lo} > {hi}");
        self.unary(Op::Clamp { lo, hi }, a, |x| x.max(lo).min(hi))
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        assert!(
            sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0],
            "contract violation: matmul shape mismatch {sa:?} vs {sb:?}"
        );
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), sa[0], sa[1], sb[1]);
        self.push(
            Op::MatMul,
            vec![a, b],
            Tensor::from_raw(vec![sa[0], sb[1]], data),
            vec![],
        )
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let s = self.shape(a).to_vec();
        assert_eq!(s.len(), 2, "contract violation: transpose of shape {s:?}");
        let data = transpose_raw(self.value(a).data(), s[0], s[1]);
        self.push(Op::Transpose, vec![a], Tensor::from_raw(vec![s[1], s[0]], data), vec![])
    }

    pub fn reshape(&mut self, a: NodeId, shape: impl Into<Vec<usize>>) -> NodeId {
        let value = self.value(a).reshaped(shape);
        self.push(Op::Reshape, vec![a], value, vec![])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let mut acc = S::zero();
        for &v in self.value(a).data() {
            acc += v;
        }
        self.push(Op::Sum, vec![a], Tensor::scalar(acc), vec![])
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let mut acc = S::zero();
        for &v in t.data() {
            acc += v;
        }
        let m = acc / S::of_usize(t.len());
        self.push(Op::Mean, vec![a], Tensor::scalar(m), vec![])
    }

    fn reduce_axis(&mut self, a: NodeId, axis: usize, mean: bool) -> NodeId {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let data = self.value(a).data();
        let mut out = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += data[base + i];
                }
            }
        }
        if mean {
            let d = S::of_usize(n);
            for v in &mut out {
                *v = *v / d;
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let op = if mean { Op::MeanAxis(axis) } else { Op::SumAxis(axis) };
        self.push(op, vec![a], Tensor::from_raw(oshape, out), vec![])
    }

    /// Sum along `axis`, keeping it with extent 1.
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> NodeId {
        self.reduce_axis(a, axis, false)
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, a: NodeId, axis: usize) -> NodeId {
        self.reduce_axis(a, axis, true)
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> NodeId {
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let mut y = vec![S::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let mut m = x[at(0)];
                for k in 1..n {
                    m = m.max(x[at(k)]);
                }
                let mut total = S::zero();
                for k in 0..n {
                    let e = (x[at(k)] - m).exp();
                    y[at(k)] = e;
                    total += e;
                }
                for k in 0..n {
                    y[at(k)] = y[at(k)] / total;
                }
            }
        }
        self.push(Op::Softmax(axis), vec![a], Tensor::from_raw(shape, y), vec![])
    }

    /// Normalizes to zero mean and unit population variance along `axis`.
    pub fn layer_norm(&mut self, a: NodeId, axis: usize, eps: S) -> NodeId {
        assert!(eps >= S::zero(), "contract violation: layer_norm eps {eps} < 0");
        let shape = self.shape(a).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let x = self.value(a).data();
        let nn = S::of_usize(n);
        let mut y = vec![S::zero(); x.len()];
        let mut recip = vec![S::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let mut mean = S::zero();
                for k in 0..n {
                    mean += x[at(k)];
                }
                mean = mean / nn;
                let mut var = S::zero();
                for k in 0..n {
                    let d = x[at(k)] - mean;
                    var += d * d;
                }
                var = var / nn;
                let r = S::one() / (var + eps).sqrt();
                recip[o * inner + i] = r;
                for k in 0..n {
                    y[at(k)] = (x[at(k)] - mean) * r;
                }
            }
        }
        self.push(Op::LayerNorm { axis }, vec![a], Tensor::from_raw(shape, y), recip)
    }

    /// Elementwise log-density of `x` under `N(mean, exp(log_std)^2)`, with
    /// broadcasting over the three inputs.
    pub fn gaussian_log_prob(&mut self, x: NodeId, mean: NodeId, log_std: NodeId) -> NodeId {
        let sx = self.shape(x).to_vec();
        let sm = self.shape(mean).to_vec();
        let sl = self.shape(log_std).to_vec();
        let out = broadcast_shape(&sx, &sm)
            .and_then(|s| broadcast_shape(&s, &sl))
            .unwrap_or_else(|| {
                panic!("contract violation: gaussian_log_prob shapes {sx:?}, {sm:?}, {sl:?}")
            });
        let (mx, mm, ml) = (
            broadcast_map(&sx, &out),
            broadcast_map(&sm, &out),
            broadcast_map(&sl, &out),
        );
        let half_ln_2pi = S::of(0.5) * (S::of(2.0) * S::PI()).ln();
        let half = S::of(0.5);
        let (dx, dm, dl) = (
            self.value(x).data(),
            self.value(mean).data(),
            self.value(log_std).data(),
        );
        let total: usize = out.iter().product();
        let data = (0..total)
            .map(|i| {
                let ls = gather(dl, &ml, i);
                let z = (gather(dx, &mx, i) - gather(dm, &mm, i)) * (-ls).exp();
                -half * z * z - ls - half_ln_2pi
            })
            .collect();
        self.push(
            Op::GaussianLogProb,
            vec![x, mean, log_std],
            Tensor::from_raw(out, data),
            vec![],
        )
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let s = self.shape(a).to_vec();
        assert!(
            s.len() == 2 && start < end && end <= s[1],
            "contract violation: slice_cols {start}..{end} of shape {s:?}"
        );
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(s[0] * (end - start));
        for r in 0..s[0] {
            data.extend_from_slice(&src[r * s[1] + start..r * s[1] + end]);
        }
        self.push(
            Op::SliceCols { start },
            vec![a],
            Tensor::from_raw(vec![s[0], end - start], data),
            vec![],
        )
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "contract violation: concat_cols of nothing");
        let rows = self.shape(parts[0])[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            assert!(
                s.len() == 2 && s[0] == rows,
                "contract violation: concat_cols shape mismatch {:?} vs {:?}",
                self.shape(parts[0]),
                s
            );
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push(
            Op::ConcatCols,
            parts.to_vec(),
            Tensor::from_raw(vec![rows, total], data),
            vec![],
        )
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "contract violation: concat_rows of nothing");
        let cols = self.shape(parts[0])[1];
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            assert!(
                s.len() == 2 && s[1] == cols,
                "contract violation: concat_rows shape mismatch {:?} vs {:?}",
                self.shape(parts[0]),
                s
            );
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        self.push(
            Op::ConcatRows,
            parts.to_vec(),
            Tensor::from_raw(vec![rows, cols], data),
            vec![],
        )
    }

    /// Adjoints of all nodes with respect to a one-element output.
    pub fn backward(&self, output: NodeId) -> Gradients<S> {
        let out = &self.nodes[output.0];
        assert_eq!(
            out.value.len(),
            1,
            "contract violation: backward from non-scalar output of shape {:?}",
            out.value.shape()
        );
        let mut adj: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !out.requires_grad {
            return Gradients { adjoints: adj };
        }
        adj[output.0] = Some(Tensor::ones(out.value.shape().to_vec()));
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            self.backprop_node(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Gradients { adjoints: adj }
    }

    /// Gradients of a scalar output with respect to each of `wrt`;
    /// disconnected nodes get zeros of matching shape.
    pub fn grad(&self, output: NodeId, wrt: &[NodeId]) -> Vec<Tensor<S>> {
        let grads = self.backward(output);
        wrt.iter().map(|&id| grads.get_or_zeros(self, id)).collect()
    }

    fn accumulate(&self, adj: &mut [Option<Tensor<S>>], id: NodeId, contrib: Vec<S>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut adj[id.0] {
            Some(t) => {
                for (a, c) in t.data_mut().iter_mut().zip(contrib) {
                    *a += c;
                }
            }
            slot @ None => {
                *slot = Some(Tensor::from_raw(
                    self.nodes[id.0].value.shape().to_vec(),
                    contrib,
                ))
            }
        }
    }

    fn backprop_node(&self, node: &Node<S>, g: &Tensor<S>, adj: &mut [Option<Tensor<S>>]) {
        let gd = g.data();
        let out_shape = node.value.shape();
        let y = node.value.data();
        let inp = |k: usize| &self.nodes[node.inputs[k].0].value;
        let wants = |k: usize| self.nodes[node.inputs[k].0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Minimum => {
                let (a, b) = (inp(0), inp(1));
                let ma = broadcast_map(a.shape(), out_shape);
                let mb = broadcast_map(b.shape(), out_shape);
                let (da, db) = (a.data(), b.data());
                let n = gd.len();
                let (ga, gb): (Vec<S>, Vec<S>) = match node.op {
                    Op::Add => (gd.to_vec(), gd.to_vec()),
                    Op::Sub => (gd.to_vec(), gd.iter().map(|&v| -v).collect()),
                    Op::Mul => (
                        (0..n).map(|i| gd[i] * gather(db, &mb, i)).collect(),
                        (0..n).map(|i| gd[i] * gather(da, &ma, i)).collect(),
                    ),
                    Op::Div => (
                        (0..n).map(|i| gd[i] / gather(db, &mb, i)).collect(),
                        (0..n)
                            .map(|i| {
                                let bv = gather(db, &mb, i);
                                -gd[i] * gather(da, &ma, i) / (bv * bv)
                            })
                            .collect(),
                    ),
                    _ => {
                        let mut ga = vec![S::zero(); n];
                        let mut gb = vec![S::zero(); n];
                        for i in 0..n {
                            if gather(da, &ma, i) <= gather(db, &mb, i) {
                                ga[i] = gd[i];
                            } else {
                                gb[i] = gd[i];
                            }
                        }
                        (ga, gb)
                    }
                };
                if wants(0) {
                    self.accumulate(adj, node.inputs[0], reduce_to(&ga, &ma, a.len()));
                }
                if wants(1) {
                    self.accumulate(adj, node.inputs[1], reduce_to(&gb, &mb, b.len()));
                }
            }
            Op::Neg => self.accumulate(adj, node.inputs[0], gd.iter().map(|&v| -v).collect()),
            Op::Scale(c) => {
                let c = *c;
                self.accumulate(adj, node.inputs[0], gd.iter().map(|&v| v * c).collect())
            }
            Op::Offset(_) | Op::Reshape => self.accumulate(adj, node.inputs[0], gd.to_vec()),
            Op::Tanh => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter()
                    .zip(y)
                    .map(|(&g, &y)| g * (S::one() - y * y))
                    .collect(),
            ),
            Op::Relu => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter()
                    .zip(inp(0).data())
                    .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                    .collect(),
            ),
            Op::Exp => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter().zip(y).map(|(&g, &y)| g * y).collect(),
            ),
            Op::Log => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter().zip(inp(0).data()).map(|(&g, &x)| g / x).collect(),
            ),
            Op::Square => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter()
                    .zip(inp(0).data())
                    .map(|(&g, &x)| S::of(2.0) * x * g)
                    .collect(),
            ),
            Op::Sqrt => self.accumulate(
                adj,
                node.inputs[0],
                gd.iter()
                    .zip(y)
                    .map(|(&g, &y)| g / (S::of(2.0) * y))
                    .collect(),
            ),
            Op::Clamp { lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                self.accumulate(
                    adj,
                    node.inputs[0],
                    gd.iter()
                        .zip(inp(0).data())
                        .map(|(&g, &x)| if x >= lo && x <= hi { g } else { S::zero() })
                        .collect(),
                )
            }
            Op::Sum => {
                let n = inp(0).len();
                self.accumulate(adj, node.inputs[0], vec![gd[0]; n])
            }
            Op::Mean => {
                let n = inp(0).len();
                let v = gd[0] / S::of_usize(n);
                self.accumulate(adj, node.inputs[0], vec![v; n])
            }
            Op::SumAxis(axis) | Op::MeanAxis(axis) => {
                let (outer, n, inner) = axis_split(inp(0).shape(), *axis);
                let div = if matches!(node.op, Op::MeanAxis(_)) {
                    S::of_usize(n)
                } else {
                    S::one()
                };
                let mut out = vec![S::zero(); outer * n * inner];
                for o in 0..outer {
                    for k in 0..n {
                        for i in 0..inner {
                            out[(o * n + k) * inner + i] = gd[o * inner + i] / div;
                        }
                    }
                }
                self.accumulate(adj, node.inputs[0], out)
            }
            Op::Softmax(axis) => {
                let (outer, n, inner) = axis_split(out_shape, *axis);
                let mut out = vec![S::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * n + k) * inner + i;
                        let mut dot = S::zero();
                        for k in 0..n {
                            dot += gd[at(k)] * y[at(k)];
                        }
                        for k in 0..n {
                            out[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(adj, node.inputs[0], out)
            }
            Op::LayerNorm { axis } => {
                let (outer, n, inner) = axis_split(out_shape, *axis);
                let nn = S::of_usize(n);
                let mut out = vec![S::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * n + k) * inner + i;
                        let r = node.aux[o * inner + i];
                        let mut mg = S::zero();
                        let mut mgy = S::zero();
                        for k in 0..n {
                            mg += gd[at(k)];
                            mgy += gd[at(k)] * y[at(k)];
                        }
                        mg = mg / nn;
                        mgy = mgy / nn;
                        for k in 0..n {
                            out[at(k)] = r * (gd[at(k)] - mg - y[at(k)] * mgy);
                        }
                    }
                }
                self.accumulate(adj, node.inputs[0], out)
            }
            Op::GaussianLogProb => {
                let (x, m, l) = (inp(0), inp(1), inp(2));
                let (mx, mm, ml) = (
                    broadcast_map(x.shape(), out_shape),
                    broadcast_map(m.shape(), out_shape),
                    broadcast_map(l.shape(), out_shape),
                );
                let n = gd.len();
                let mut gx = Vec::with_capacity(n);
                let mut gl = Vec::with_capacity(n);
                for i in 0..n {
                    let ls = gather(l.data(), &ml, i);
                    let inv = (-ls).exp();
                    let z = (gather(x.data(), &mx, i) - gather(m.data(), &mm, i)) * inv;
                    gx.push(-z * inv * gd[i]);
                    gl.push((z * z - S::one()) * gd[i]);
                }
                if wants(0) {
                    self.accumulate(adj, node.inputs[0], reduce_to(&gx, &mx, x.len()));
                }
                if wants(1) {
                    let gm: Vec<S> = gx.iter().map(|&v| -v).collect();
                    self.accumulate(adj, node.inputs[1], reduce_to(&gm, &mm, m.len()));
                }
                if wants(2) {
                    self.accumulate(adj, node.inputs[2], reduce_to(&gl, &ml, l.len()));
                }
            }
            Op::MatMul => {
                let (a, b) = (inp(0), inp(1));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if wants(0) {
                    // g [m,n] · bᵀ [n,k]
                    let bd = b.data();
                    let mut ga = vec![S::zero(); m * k];
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            let mut acc = S::zero();
                            for (gv, bv) in grow.iter().zip(brow) {
                                acc += *gv * *bv;
                            }
                            ga[i * k + p] = acc;
                        }
                    }
                    self.accumulate(adj, node.inputs[0], ga);
                }
                if wants(1) {
                    // aᵀ [k,m] · g [m,n]
                    let at = transpose_raw(a.data(), m, k);
                    let gb = matmul_raw(&at, gd, k, m, n);
                    self.accumulate(adj, node.inputs[1], gb);
                }
            }
            Op::Transpose => {
                let s = out_shape;
                self.accumulate(adj, node.inputs[0], transpose_raw(gd, s[0], s[1]))
            }
            Op::SliceCols { start } => {
                let src = inp(0).shape();
                let (rows, cols) = (src[0], src[1]);
                let w = out_shape[1];
                let mut out = vec![S::zero(); rows * cols];
                for r in 0..rows {
                    out[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                self.accumulate(adj, node.inputs[0], out)
            }
            Op::ConcatCols => {
                let rows = out_shape[0];
                let total = out_shape[1];
                let mut offset = 0;
                for (k, &p) in node.inputs.iter().enumerate() {
                    let w = inp(k).shape()[1];
                    if wants(k) {
                        let mut part = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            part.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                        }
                        self.accumulate(adj, p, part);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows => {
                let mut offset = 0;
                for (k, &p) in node.inputs.iter().enumerate() {
                    let len = inp(k).len();
                    if wants(k) {
                        self.accumulate(adj, p, gd[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
        }
    }
}
