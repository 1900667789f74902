//! Reverse-mode automatic differentiation over dense fp64 arrays.
//!
//! A [`Tape`] is a Wengert list: the forward pass eagerly evaluates each
//! primitive and records it; [`Tape::backward`] replays the list in reverse,
//! accumulating vector-Jacobian products into per-node gradient buffers.
//!
//! The primitive set is deliberately small and unfused. The only broadcast is
//! bias-add over the last axis. Subgradient conventions at kinks are fixed so
//! gradient checks are reproducible:
//!
//! * `relu'(0) = 0`
//! * `d/dx min(x, c) = 1` at `x = c`
//! * `d/dx max(x, c) = 1` at `x = c`
//! * `abs'(0) = 0`
//! * Frobenius norm at the zero tensor gets subgradient 0.

mod check;

pub use check::{finite_diff_check, GradCheckReport};

use crate::error::{CoreError, Result};
use crate::tensor::{ParamSet, Shape, Tensor};
use std::collections::BTreeMap;

/// Index of a value node on a tape.
pub type NodeId = usize;

/// The differentiable primitives a tape can record.
#[derive(Clone, Debug, PartialEq)]
pub enum PrimitiveKind {
    /// `[m,k] x [k,n] -> [m,n]`
    MatMul,
    /// Elementwise add, or bias-add of a rank-1 tensor over the last axis.
    Add,
    /// Elementwise multiply (same shape).
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    /// Natural log; rejects non-positive inputs.
    Log,
    Square,
    /// Rejects non-positive inputs (0 would have an infinite derivative).
    Sqrt,
    /// Sum of all elements -> scalar.
    Sum,
    /// Mean of all elements -> scalar.
    Mean,
    /// Concatenate along the last axis.
    Concat,
    /// Contiguous range of the last axis.
    Slice { start: usize, len: usize },
    /// `min(x, c)` elementwise.
    ScalarMin(f64),
    /// `max(x, c)` elementwise.
    ClampMin(f64),
    Abs,
    /// `sqrt(sum(x^2))` over the whole tensor -> scalar.
    FrobeniusNorm,
}

#[derive(Clone, Debug)]
enum Provenance {
    Leaf,
    Prim {
        kind: PrimitiveKind,
        inputs: Vec<NodeId>,
    },
}

/// One value node: shaped fp64 data plus a gradient slot of the same shape.
#[derive(Debug)]
pub struct DiffValue {
    shape: Shape,
    data: Vec<f64>,
    /// Lazily allocated; `None` is observationally identical to all-zeros.
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    provenance: Provenance,
}

impl DiffValue {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

/// Ordered record of primitive applications. Inputs always precede outputs,
/// so a single reverse sweep visits each node exactly once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<DiffValue>,
    /// Smallest distance observed between any elementwise input and the
    /// nearest kink/singularity of its primitive. Gradient checks use this
    /// to stay out of the epsilon-ball around non-smooth points.
    kink_margin: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &DiffValue {
        &self.nodes[id]
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn shape(&self, id: NodeId) -> &Shape {
        &self.nodes[id].shape
    }

    /// Value of a scalar node.
    pub fn value(&self, id: NodeId) -> f64 {
        debug_assert!(self.nodes[id].shape.is_scalar());
        self.nodes[id].data[0]
    }

    /// Gradient of a node; zeros if nothing has flowed into it.
    pub fn grad(&self, id: NodeId) -> Vec<f64> {
        match &self.nodes[id].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[id].data.len()],
        }
    }

    pub fn min_kink_margin(&self) -> f64 {
        self.kink_margin
    }

    /// Register a leaf carrying `tensor`'s data.
    pub fn leaf(&mut self, tensor: &Tensor, requires_grad: bool) -> NodeId {
        self.push(
            tensor.shape().clone(),
            tensor.data().to_vec(),
            requires_grad,
            Provenance::Leaf,
        )
    }

    /// Gradient-stopped leaf from raw parts.
    pub fn constant(&mut self, shape: Shape, data: Vec<f64>) -> Result<NodeId> {
        if shape.numel() != data.len() {
            return Err(CoreError::InvalidShape(format!(
                "constant: shape {shape} wants {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(self.push(shape, data, false, Provenance::Leaf))
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.push(Shape::scalar(), vec![v], false, Provenance::Leaf)
    }

    pub fn full_const(&mut self, shape: Shape, v: f64) -> NodeId {
        let n = shape.numel();
        self.push(shape, vec![v; n], false, Provenance::Leaf)
    }

    /// Gradient-stopped copy of an existing node's current value.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let shape = self.nodes[id].shape.clone();
        let data = self.nodes[id].data.clone();
        self.push(shape, data, false, Provenance::Leaf)
    }

    fn push(
        &mut self,
        shape: Shape,
        data: Vec<f64>,
        requires_grad: bool,
        provenance: Provenance,
    ) -> NodeId {
        self.nodes.push(DiffValue {
            shape,
            data,
            grad: None,
            requires_grad,
            provenance,
        });
        self.nodes.len() - 1
    }

    fn note_margin(&mut self, m: f64) {
        if m < self.kink_margin {
            self.kink_margin = m;
        }
    }

    /// Record one primitive application and eagerly evaluate it.
    pub fn apply(&mut self, kind: PrimitiveKind, inputs: &[NodeId]) -> Result<NodeId> {
        let (shape, data) = self.eval(&kind, inputs)?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(
            shape,
            data,
            requires_grad,
            Provenance::Prim {
                kind,
                inputs: inputs.to_vec(),
            },
        ))
    }

    fn eval(&mut self, kind: &PrimitiveKind, inputs: &[NodeId]) -> Result<(Shape, Vec<f64>)> {
        let arity_err = |want: &str| {
            Err(CoreError::InvalidArgument(format!(
                "{kind:?} expects {want} input(s), got {}",
                inputs.len()
            )))
        };
        match kind {
            PrimitiveKind::MatMul => {
                if inputs.len() != 2 {
                    return arity_err("2");
                }
                let (a, b) = (&self.nodes[inputs[0]], &self.nodes[inputs[1]]);
                let (sa, sb) = (a.shape.clone(), b.shape.clone());
                if sa.rank() != 2 || sb.rank() != 2 || sa.dims()[1] != sb.dims()[0] {
                    return Err(CoreError::ShapeMismatch {
                        op: "matmul",
                        left: sa,
                        right: sb,
                    });
                }
                let (m, k, n) = (sa.dims()[0], sa.dims()[1], sb.dims()[1]);
                let mut out = vec![0.0; m * n];
                matmul(&a.data, &b.data, m, k, n, &mut out);
                Ok((Shape::new(&[m, n])?, out))
            }
            PrimitiveKind::Add => {
                if inputs.len() != 2 {
                    return arity_err("2");
                }
                let (a, b) = (&self.nodes[inputs[0]], &self.nodes[inputs[1]]);
                if a.shape == b.shape {
                    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
                    Ok((a.shape.clone(), data))
                } else if b.shape.rank() == 1 && b.shape.last() == a.shape.last() {
                    // bias-add over the last axis
                    let last = a.shape.last();
                    let mut out = a.data.clone();
                    for row in out.chunks_mut(last) {
                        for (o, bv) in row.iter_mut().zip(&b.data) {
                            *o += bv;
                        }
                    }
                    Ok((a.shape.clone(), out))
                } else {
                    Err(CoreError::ShapeMismatch {
                        op: "add",
                        left: a.shape.clone(),
                        right: b.shape.clone(),
                    })
                }
            }
            PrimitiveKind::Mul => {
                if inputs.len() != 2 {
                    return arity_err("2");
                }
                let (a, b) = (&self.nodes[inputs[0]], &self.nodes[inputs[1]]);
                if a.shape != b.shape {
                    return Err(CoreError::ShapeMismatch {
                        op: "mul",
                        left: a.shape.clone(),
                        right: b.shape.clone(),
                    });
                }
                let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
                Ok((a.shape.clone(), data))
            }
            PrimitiveKind::Relu => {
                let x = self.unary(inputs, "relu")?;
                let m = min_abs(&self.nodes[x].data);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.max(0.0)).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Sigmoid => {
                let x = self.unary(inputs, "sigmoid")?;
                let data = self.nodes[x]
                    .data
                    .iter()
                    .map(|&v| 1.0 / (1.0 + (-v).exp()))
                    .collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Tanh => {
                let x = self.unary(inputs, "tanh")?;
                let data = self.nodes[x].data.iter().map(|&v| v.tanh()).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Exp => {
                let x = self.unary(inputs, "exp")?;
                let data = self.nodes[x].data.iter().map(|&v| v.exp()).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Log => {
                let x = self.unary(inputs, "log")?;
                if let Some(v) = self.nodes[x].data.iter().find(|v| **v <= 0.0) {
                    return Err(CoreError::Domain {
                        op: "log",
                        detail: format!("non-positive input {v}"),
                    });
                }
                let m = self.nodes[x].data.iter().cloned().fold(f64::INFINITY, f64::min);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.ln()).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Square => {
                let x = self.unary(inputs, "square")?;
                let data = self.nodes[x].data.iter().map(|&v| v * v).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Sqrt => {
                let x = self.unary(inputs, "sqrt")?;
                if let Some(v) = self.nodes[x].data.iter().find(|v| **v <= 0.0) {
                    return Err(CoreError::Domain {
                        op: "sqrt",
                        detail: format!("non-positive input {v}"),
                    });
                }
                let m = self.nodes[x].data.iter().cloned().fold(f64::INFINITY, f64::min);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.sqrt()).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Sum => {
                let x = self.unary(inputs, "sum")?;
                Ok((Shape::scalar(), vec![self.nodes[x].data.iter().sum()]))
            }
            PrimitiveKind::Mean => {
                let x = self.unary(inputs, "mean")?;
                let n = self.nodes[x].data.len() as f64;
                Ok((
                    Shape::scalar(),
                    vec![self.nodes[x].data.iter().sum::<f64>() / n],
                ))
            }
            PrimitiveKind::Concat => {
                if inputs.is_empty() {
                    return arity_err(">= 1");
                }
                let first = &self.nodes[inputs[0]];
                let rank = first.shape.rank();
                let rows = first.shape.rows();
                let mut total_last = 0;
                for &i in inputs {
                    let s = &self.nodes[i].shape;
                    if s.rank() != rank || s.rows() != rows || s.dims()[..rank - 1] != first.shape.dims()[..rank - 1] {
                        return Err(CoreError::ShapeMismatch {
                            op: "concat",
                            left: first.shape.clone(),
                            right: s.clone(),
                        });
                    }
                    total_last += s.last();
                }
                let out_shape = first.shape.with_last(total_last)?;
                let mut out = vec![0.0; out_shape.numel()];
                for r in 0..rows {
                    let mut off = 0;
                    for &i in inputs {
                        let last = self.nodes[i].shape.last();
                        let src = &self.nodes[i].data[r * last..(r + 1) * last];
                        out[r * total_last + off..r * total_last + off + last]
                            .copy_from_slice(src);
                        off += last;
                    }
                }
                Ok((out_shape, out))
            }
            PrimitiveKind::Slice { start, len } => {
                let x = self.unary(inputs, "slice")?;
                let shape = self.nodes[x].shape.clone();
                let last = shape.last();
                if *len == 0 || start + len > last {
                    return Err(CoreError::InvalidArgument(format!(
                        "slice [{start}, {start}+{len}) out of range for last axis {last}"
                    )));
                }
                let rows = shape.rows();
                let out_shape = shape.with_last(*len)?;
                let mut out = vec![0.0; rows * len];
                for r in 0..rows {
                    out[r * len..(r + 1) * len]
                        .copy_from_slice(&self.nodes[x].data[r * last + start..r * last + start + len]);
                }
                Ok((out_shape, out))
            }
            PrimitiveKind::ScalarMin(c) => {
                let x = self.unary(inputs, "scalar_min")?;
                let m = self.nodes[x]
                    .data
                    .iter()
                    .map(|v| (v - c).abs())
                    .fold(f64::INFINITY, f64::min);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.min(*c)).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::ClampMin(c) => {
                let x = self.unary(inputs, "clamp_min")?;
                let m = self.nodes[x]
                    .data
                    .iter()
                    .map(|v| (v - c).abs())
                    .fold(f64::INFINITY, f64::min);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.max(*c)).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::Abs => {
                let x = self.unary(inputs, "abs")?;
                let m = min_abs(&self.nodes[x].data);
                self.note_margin(m);
                let data = self.nodes[x].data.iter().map(|&v| v.abs()).collect();
                Ok((self.nodes[x].shape.clone(), data))
            }
            PrimitiveKind::FrobeniusNorm => {
                let x = self.unary(inputs, "frobenius_norm")?;
                let norm = self.nodes[x]
                    .data
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                self.note_margin(norm);
                Ok((Shape::scalar(), vec![norm]))
            }
        }
    }

    fn unary(&self, inputs: &[NodeId], op: &'static str) -> Result<NodeId> {
        if inputs.len() != 1 {
            return Err(CoreError::InvalidArgument(format!(
                "{op} expects 1 input, got {}",
                inputs.len()
            )));
        }
        Ok(inputs[0])
    }

    // Ergonomic wrappers over `apply`.

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Add, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Mul, &[a, b])
    }
    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Relu, &[x])
    }
    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Sigmoid, &[x])
    }
    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Tanh, &[x])
    }
    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Exp, &[x])
    }
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Log, &[x])
    }
    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Square, &[x])
    }
    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Sqrt, &[x])
    }
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Sum, &[x])
    }
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Mean, &[x])
    }
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(PrimitiveKind::Concat, parts)
    }
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(PrimitiveKind::Slice { start, len }, &[x])
    }
    pub fn scalar_min(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(PrimitiveKind::ScalarMin(c), &[x])
    }
    pub fn clamp_min(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(PrimitiveKind::ClampMin(c), &[x])
    }
    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::Abs, &[x])
    }
    pub fn frobenius_norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(PrimitiveKind::FrobeniusNorm, &[x])
    }

    // Compositions of primitives (no new backward rules).

    /// `x * c` via elementwise mul with a constant.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let k = self.full_const(self.nodes[x].shape.clone(), c);
        self.mul(x, k)
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        self.scale(x, -1.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.neg(b)?;
        self.add(a, nb)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        let one = self.full_const(self.nodes[x].shape.clone(), 1.0);
        self.sub(one, x)
    }

    /// `x + c` elementwise.
    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let k = self.full_const(self.nodes[x].shape.clone(), c);
        self.add(x, k)
    }

    /// Sum along the last axis via matmul with a ones column: `[m,k] -> [m,1]`.
    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let k = self.nodes[x].shape.last();
        let ones = self.full_const(Shape::new(&[k, 1])?, 1.0);
        self.matmul(x, ones)
    }

    /// Tile a `[m,1]` column to `[m,k]` via matmul with a ones row.
    pub fn tile_col(&mut self, x: NodeId, k: usize) -> Result<NodeId> {
        let ones = self.full_const(Shape::new(&[1, k])?, 1.0);
        self.matmul(x, ones)
    }

    /// Reset every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Fill `grad` fields with `d loss / d node` for every node reachable
    /// from `loss`. Accumulation is additive across fan-out, so calling this
    /// twice without `zero_grad` doubles the gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss].shape.is_scalar() {
            return Err(CoreError::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {}",
                self.nodes[loss].shape
            )));
        }
        self.accumulate(loss, &[1.0]);
        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad || self.nodes[id].grad.is_none() {
                continue;
            }
            let Provenance::Prim { kind, inputs } = self.nodes[id].provenance.clone() else {
                continue;
            };
            self.backward_one(id, &kind, &inputs);
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: &[f64]) {
        let node = &mut self.nodes[id];
        match &mut node.grad {
            Some(g) => {
                for (gv, dv) in g.iter_mut().zip(delta) {
                    *gv += dv;
                }
            }
            None => node.grad = Some(delta.to_vec()),
        }
    }

    fn backward_one(&mut self, out: NodeId, kind: &PrimitiveKind, inputs: &[NodeId]) {
        let d_out = self.nodes[out].grad.clone().expect("checked by caller");
        match kind {
            PrimitiveKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let m = self.nodes[a].shape.dims()[0];
                let k = self.nodes[a].shape.dims()[1];
                let n = self.nodes[b].shape.dims()[1];
                if self.nodes[a].requires_grad {
                    let mut da = vec![0.0; m * k];
                    matmul_nt(&d_out, &self.nodes[b].data, m, n, k, &mut da);
                    self.accumulate(a, &da);
                }
                if self.nodes[b].requires_grad {
                    let mut db = vec![0.0; k * n];
                    matmul_tn(&self.nodes[a].data, &d_out, m, k, n, &mut db);
                    self.accumulate(b, &db);
                }
            }
            PrimitiveKind::Add => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.nodes[a].requires_grad {
                    self.accumulate(a, &d_out);
                }
                if self.nodes[b].requires_grad {
                    if self.nodes[b].shape == self.nodes[a].shape {
                        self.accumulate(b, &d_out);
                    } else {
                        // bias: sum the upstream gradient over rows
                        let last = self.nodes[b].shape.last();
                        let mut db = vec![0.0; last];
                        for row in d_out.chunks(last) {
                            for (acc, v) in db.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        self.accumulate(b, &db);
                    }
                }
            }
            PrimitiveKind::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.nodes[a].requires_grad {
                    let da: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[b].data)
                        .map(|(d, y)| d * y)
                        .collect();
                    self.accumulate(a, &da);
                }
                if self.nodes[b].requires_grad {
                    let db: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[a].data)
                        .map(|(d, x)| d * x)
                        .collect();
                    self.accumulate(b, &db);
                }
            }
            PrimitiveKind::Relu => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Sigmoid => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[out].data)
                        .map(|(d, &y)| d * y * (1.0 - y))
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Tanh => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[out].data)
                        .map(|(d, &y)| d * (1.0 - y * y))
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Exp => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[out].data)
                        .map(|(d, &y)| d * y)
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Log => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| d / v)
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Square => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| d * 2.0 * v)
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Sqrt => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[out].data)
                        .map(|(d, &y)| d * 0.5 / y)
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Sum => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx = vec![d_out[0]; self.nodes[x].data.len()];
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Mean => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let n = self.nodes[x].data.len() as f64;
                    let dx = vec![d_out[0] / n; self.nodes[x].data.len()];
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Concat => {
                let rows = self.nodes[out].shape.rows();
                let total_last = self.nodes[out].shape.last();
                let mut off = 0;
                for &i in inputs {
                    let last = self.nodes[i].shape.last();
                    if self.nodes[i].requires_grad {
                        let mut di = vec![0.0; rows * last];
                        for r in 0..rows {
                            di[r * last..(r + 1) * last].copy_from_slice(
                                &d_out[r * total_last + off..r * total_last + off + last],
                            );
                        }
                        self.accumulate(i, &di);
                    }
                    off += last;
                }
            }
            PrimitiveKind::Slice { start, len } => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let last = self.nodes[x].shape.last();
                    let rows = self.nodes[x].shape.rows();
                    let mut dx = vec![0.0; rows * last];
                    for r in 0..rows {
                        dx[r * last + start..r * last + start + len]
                            .copy_from_slice(&d_out[r * len..(r + 1) * len]);
                    }
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::ScalarMin(c) => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| if v <= *c { *d } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::ClampMin(c) => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| if v >= *c { *d } else { 0.0 })
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::Abs => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let dx: Vec<f64> = d_out
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(d, &v)| d * sign0(v))
                        .collect();
                    self.accumulate(x, &dx);
                }
            }
            PrimitiveKind::FrobeniusNorm => {
                let x = inputs[0];
                if self.nodes[x].requires_grad {
                    let norm = self.nodes[out].data[0];
                    let dx: Vec<f64> = if norm > 0.0 {
                        self.nodes[x]
                            .data
                            .iter()
                            .map(|&v| d_out[0] * v / norm)
                            .collect()
                    } else {
                        vec![0.0; self.nodes[x].data.len()]
                    };
                    self.accumulate(x, &dx);
                }
            }
        }
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn min_abs(data: &[f64]) -> f64 {
    data.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// `out += a[m,k] * b[k,n]`, row-major, ikj order.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a[m,n] * b[k,n]^T` (dot of rows).
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * k + kk] += acc;
        }
    }
}

/// `out += a[m,k]^T * b[m,n]`.
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let orow = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Map from parameter name to its leaf node on a tape.
#[derive(Debug, Default)]
pub struct TapeBinding {
    ids: BTreeMap<String, NodeId>,
}

impl TapeBinding {
    /// Register every tensor of `params` as a leaf on `tape`.
    pub fn bind(tape: &mut Tape, params: &ParamSet, requires_grad: bool) -> Self {
        let mut ids = BTreeMap::new();
        for (name, tensor) in params.iter() {
            ids.insert(name.clone(), tape.leaf(tensor, requires_grad));
        }
        TapeBinding { ids }
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.ids.iter()
    }

    /// Pull accumulated gradients out of the tape, keyed by parameter name.
    pub fn gradients(&self, tape: &Tape) -> BTreeMap<String, Vec<f64>> {
        self.ids
            .iter()
            .map(|(name, &id)| (name.clone(), tape.grad(id)))
            .collect()
    }
}
