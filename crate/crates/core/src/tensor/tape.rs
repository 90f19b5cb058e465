//! Reverse-mode gradient tape.
//!
//! Nodes are appended in evaluation order, so insertion order is already a
//! topological order and `backward` is a single reverse sweep. A tape is
//! single-owner; concurrent training uses one tape per worker.

use super::kernels::{self, ConvGeom, ConvSpec, PoolGeom};
use super::Tensor;
use crate::error::{shape_err, GaitError, Result};

const CLAMP_LO: f64 = 1e-12;
const CLAMP_HI: f64 = 1.0 - 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    MaxPool { x: Var, argmax: Vec<usize> },
    UpConv { x: Var, w: Var, b: Var },
    MatMul { a: Var, b: Var },
    AddBias { x: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Act { x: Var, kind: Activation },
    Concat { parts: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    Reshape { x: Var },
    Softmax { x: Var },
    BinaryCe { p: Var, target: Tensor, norm: f64 },
    WeightedSum { x: Var, weights: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(|g| g.take()) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!(
            "{op}: operand shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        let requires_grad = match &op {
            Op::Leaf => false,
            op => parents(op).iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let geom = ConvGeom::new(
            self.value(x).shape(),
            self.value(w).shape(),
            self.value(b).shape(),
            spec,
        )?;
        let out = kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let value = Tensor::new(geom.out_shape(), out)?;
        self.push(value, Op::Conv2d { x, w, b, geom }, "conv2d")
    }

    pub fn maxpool2d(&mut self, x: Var, pool_h: usize, pool_w: usize, stride: usize) -> Result<Var> {
        let geom = PoolGeom::new(self.value(x).shape(), pool_h, pool_w, stride)?;
        let (out, argmax) = kernels::maxpool_forward(&geom, self.value(x).data());
        let value = Tensor::new(geom.out_shape(), out)?;
        self.push(value, Op::MaxPool { x, argmax }, "maxpool2d")
    }

    /// Transposed `1×2` convolution, time stride 2: `[B, C, H, W] -> [B, C_out, H, 2W]`.
    /// Weight is `[C, C_out, 1, 2]`.
    pub fn upconv_time(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 {
            return shape_err(format!("upconv expects [B, C, H, W] input, got {xs:?}"));
        }
        if ws.len() != 4 || ws[0] != xs[1] || ws[2] != 1 || ws[3] != 2 {
            return shape_err(format!(
                "upconv weight must be [{}, C_out, 1, 2], got {ws:?}",
                xs[1]
            ));
        }
        let co = ws[1];
        if self.value(b).shape() != [co] {
            return shape_err(format!(
                "upconv bias must be [{co}], got {:?}",
                self.value(b).shape()
            ));
        }
        let out = kernels::upconv_forward(
            &xs,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            co,
        );
        let value = Tensor::new(vec![xs[0], co, xs[2], 2 * xs[3]], out)?;
        self.push(value, Op::UpConv { x, w, b }, "upconv")
    }

    /// `[M, K] × [K, N] -> [M, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("matmul: {sa:?} × {sb:?} inner dims disagree"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push(value, Op::MatMul { a, b }, "matmul")
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(b);
        let last = *xv.shape().last().unwrap_or(&0);
        if bv.shape() != [last] {
            return shape_err(format!(
                "bias {:?} does not match last axis of {:?}",
                bv.shape(),
                xv.shape()
            ));
        }
        let mut value = xv.clone();
        for row in value.data_mut().chunks_mut(last) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        self.push(value, Op::AddBias { x, b }, "add_bias")
    }

    /// Dense layer: `x [B, N] · w [N, M] + b [M]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let z = self.matmul(x, w)?;
        self.add_bias(z, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add { a, b }, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(value, Op::Mul { a, b }, "mul")
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| kind.apply(v));
        self.push(value, Op::Act { x, kind }, "activation")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(Activation::Tanh, x)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let value = Tensor::concat(&values, axis)?;
        self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            "concat",
        )
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).narrow(axis, start, len)?;
        self.push(value, Op::Narrow { x, axis, start }, "narrow")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(value, Op::Reshape { x }, "reshape")
    }

    /// Softmax along the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let k = *xv.shape().last().unwrap_or(&1);
        let mut value = xv.clone();
        for row in value.data_mut().chunks_mut(k) {
            softmax_in_place(row);
        }
        self.push(value, Op::Softmax { x }, "softmax")
    }

    /// `-Σ [t ln p + (1-t) ln(1-p)] / norm` over every element, with `p`
    /// clamped to `[1e-12, 1-1e-12]` before the logs.
    pub fn binary_ce(&mut self, p: Var, target: Tensor, norm: f64) -> Result<Var> {
        same_shape("binary_ce", self.value(p), &target)?;
        if norm <= 0.0 {
            return Err(GaitError::Usage("binary_ce normalizer must be positive".into()));
        }
        let loss = binary_ce_value(self.value(p).data(), target.data()) / norm;
        self.push(Tensor::scalar(loss), Op::BinaryCe { p, target, norm }, "binary_ce")
    }

    /// `Σ x ⊙ weights`, a scalar; handy for probing gradients.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        same_shape("weighted_sum", self.value(x), &weights)?;
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum();
        self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, "weighted_sum")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(GaitError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &g, &mut grads)?;
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let need_dx = self.requires_grad(*x);
                let need_dw = self.requires_grad(*w) || self.requires_grad(*b);
                let (dx, dw, db) = kernels::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g.data(),
                    need_dx,
                    need_dw,
                );
                if let Some(dx) = dx {
                    let t = Tensor::new(self.value(*x).shape().to_vec(), dx)?;
                    self.accumulate(grads, *x, t);
                }
                if let (Some(dw), Some(db)) = (dw, db) {
                    let tw = Tensor::new(self.value(*w).shape().to_vec(), dw)?;
                    let tb = Tensor::new(self.value(*b).shape().to_vec(), db)?;
                    self.accumulate(grads, *w, tw);
                    self.accumulate(grads, *b, tb);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = Tensor::zeros(self.value(*x).shape());
                let d = dx.data_mut();
                for (gi, &src) in g.data().iter().zip(argmax) {
                    d[src] += gi;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::UpConv { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let co = wv.shape()[1];
                let (dx, dw, db) =
                    kernels::upconv_backward(xv.shape(), xv.data(), wv.data(), g.data(), co);
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                self.accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw)?);
                self.accumulate(grads, *b, Tensor::new(vec![co], db)?);
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; m * k];
                    kernels::gemm(m, n, k, g.data(), false, bv.data(), true, 0.0, &mut da);
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], da)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; k * n];
                    kernels::gemm(k, m, n, av.data(), true, g.data(), false, 0.0, &mut db);
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], db)?);
                }
            }
            Op::AddBias { x, b } => {
                self.accumulate(grads, *x, g.clone());
                if self.requires_grad(*b) {
                    let m = self.value(*b).len();
                    let mut db = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![m], db)?);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d)?);
                }
                if self.requires_grad(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), d)?);
                }
            }
            Op::Act { x, kind } => {
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, &y)| gi * kind.grad_from_output(y))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), d)?);
            }
            Op::Concat { parts, axis } => {
                let mut start = 0;
                for p in parts {
                    let len = self.value(*p).shape()[*axis];
                    if self.requires_grad(*p) {
                        self.accumulate(grads, *p, g.narrow(*axis, start, len)?);
                    }
                    start += len;
                }
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.value(*x).shape();
                let mut dx = Tensor::zeros(xs);
                let outer: usize = xs[..*axis].iter().product();
                let inner: usize = xs[axis + 1..].iter().product();
                let len = g.shape()[*axis];
                let d = dx.data_mut();
                for o in 0..outer {
                    let dst = (o * xs[*axis] + start) * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape { x } => {
                let t = g.clone().reshape(self.value(*x).shape())?;
                self.accumulate(grads, *x, t);
            }
            Op::Softmax { x } => {
                let y = &node.value;
                let k = *y.shape().last().unwrap_or(&1);
                let mut dx = Vec::with_capacity(y.len());
                for (yr, gr) in y.data().chunks(k).zip(g.data().chunks(k)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - dot)));
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), dx)?);
            }
            Op::BinaryCe { p, target, norm } => {
                let scale = g.data()[0] / norm;
                let pv = self.value(*p);
                let d = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&pi, &ti)| {
                        if pi <= CLAMP_LO || pi >= CLAMP_HI {
                            0.0
                        } else {
                            -scale * (ti / pi - (1.0 - ti) / (1.0 - pi))
                        }
                    })
                    .collect();
                self.accumulate(grads, *p, Tensor::new(pv.shape().to_vec(), d)?);
            }
            Op::WeightedSum { x, weights } => {
                let s = g.data()[0];
                self.accumulate(grads, *x, weights.map(|w| w * s));
            }
        }
        Ok(())
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::Conv2d { x, w, b, .. } | Op::UpConv { x, w, b } => vec![*x, *w, *b],
        Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
        Op::AddBias { x, b } => vec![*x, *b],
        Op::MaxPool { x, .. }
        | Op::Act { x, .. }
        | Op::Narrow { x, .. }
        | Op::Reshape { x }
        | Op::Softmax { x }
        | Op::WeightedSum { x, .. } => vec![*x],
        Op::BinaryCe { p, .. } => vec![*p],
        Op::Concat { parts, .. } => parts.clone(),
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub(crate) fn binary_ce_value(p: &[f64], t: &[f64]) -> f64 {
    -p.iter()
        .zip(t)
        .map(|(&pi, &ti)| {
            let pc = pi.clamp(CLAMP_LO, CLAMP_HI);
            ti * pc.ln() + (1.0 - ti) * (1.0 - pc).ln()
        })
        .sum::<f64>()
}
