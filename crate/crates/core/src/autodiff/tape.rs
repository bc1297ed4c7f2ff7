//! Eager reverse-mode tape.
//!
//! Every primitive is evaluated immediately and appended to the tape together
//! with the handles of its inputs. Because a node can only refer to nodes that
//! already exist, the tape is acyclic by construction and a single reverse
//! sweep visits every node after all of its consumers.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Shift,
    MatMul,
    Concat,
    Relu,
    Tanh,
    Sigmoid,
    Log,
    Cos,
    Sum,
    Clamp,
    WeightedSum,
    BernoulliKl,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Cos(Var),
    Sum(Var),
    Clamp(Var, f64, f64),
    WeightedSum(Vec<(Option<Var>, Var)>),
    BernoulliKl(Var, Var),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Shift(..) => OpKind::Shift,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Concat(..) => OpKind::Concat,
            Op::Relu(..) => OpKind::Relu,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Sigmoid(..) => OpKind::Sigmoid,
            Op::Log(..) => OpKind::Log,
            Op::Cos(..) => OpKind::Cos,
            Op::Sum(..) => OpKind::Sum,
            Op::Clamp(..) => OpKind::Clamp,
            Op::WeightedSum(..) => OpKind::WeightedSum,
            Op::BernoulliKl(..) => OpKind::BernoulliKl,
        }
    }

    fn name(&self) -> &'static str {
        match self.kind() {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Shift => "shift",
            OpKind::MatMul => "matmul",
            OpKind::Concat => "concat",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Log => "log",
            OpKind::Cos => "cos",
            OpKind::Sum => "sum",
            OpKind::Clamp => "clamp",
            OpKind::WeightedSum => "weighted_sum",
            OpKind::BernoulliKl => "bernoulli_kl",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Recorded computation. Single-threaded; one tape per query or batch.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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

/// `x - ln(1 + x)`, non-negative in floating point for `x > -1`.
fn excess(x: f64) -> f64 {
    x - x.ln_1p()
}

/// Divergence between Bernoulli(`p`) and Bernoulli(`q`) for `p, q` in `(0, 1)`.
///
/// Written as `p h(q/p - 1) + (1-p) h((1-q)/(1-p) - 1)` with `h(x) = x - ln(1+x)`
/// so that rounding can never produce a negative value.
pub(crate) fn bernoulli_kl(p: f64, q: f64) -> f64 {
    p * excess(q / p - 1.0) + (1.0 - p) * excess((1.0 - q) / (1.0 - p) - 1.0)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients are propagated to it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Constant leaf: no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of `v`.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::Numeric(format!(
                "{} produced a non-finite value",
                op.name()
            )));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push(op, value, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Add(a, b), value, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(Op::Sub(a, b), value, &[a, b])
    }

    /// Elementwise product. A scalar operand broadcasts over the other one.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if ta.is_scalar() {
            let s = ta.item();
            Tensor::new(tb.shape().to_vec(), tb.data().iter().map(|y| s * y).collect())?
        } else if tb.is_scalar() {
            let s = tb.item();
            Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * s).collect())?
        } else {
            return Err(shape_err("mul", ta, tb));
        };
        self.push(Op::Mul(a, b), value, &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    /// `x + c` for a constant `c`.
    pub fn shift(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Shift(x), |v| v + c)
    }

    /// Matrix-vector (`[m,n] x [n]`) or matrix-matrix (`[m,n] x [n,p]`) product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let value = match tb.shape() {
            [k] if *k == n => {
                let (wa, xb) = (ta.data(), tb.data());
                let out = (0..m)
                    .map(|i| {
                        let row = &wa[i * n..(i + 1) * n];
                        row.iter().zip(xb).map(|(w, x)| w * x).sum()
                    })
                    .collect();
                Tensor::vector(out)
            }
            [k, p] if *k == n => {
                let p = *p;
                let (wa, wb) = (ta.data(), tb.data());
                let mut out = vec![0.0; m * p];
                for i in 0..m {
                    for l in 0..n {
                        let x = wa[i * n + l];
                        for j in 0..p {
                            out[i * p + j] += x * wb[l * p + j];
                        }
                    }
                }
                Tensor::new(vec![m, p], out)?
            }
            _ => return Err(shape_err("matmul", ta, tb)),
        };
        self.push(Op::MatMul(a, b), value, &[a, b])
    }

    /// Concatenation of vectors (scalars count as length-1 vectors).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() > 1 {
                let first = self.value(parts[0]);
                return Err(shape_err("concat", first, t));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::vector(data);
        self.push(Op::Concat(parts.to_vec()), value, parts)
    }

    /// Rectifier. The subgradient at exactly zero is zero.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Cos(x), f64::cos)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), &[x])
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Elementwise Bernoulli divergence `KL(p || q)`; inputs must lie in `(0, 1)`.
    pub fn bernoulli_kl(&mut self, p: Var, q: Var) -> Result<Var> {
        let (tp, tq) = (self.value(p), self.value(q));
        if tp.shape() != tq.shape() {
            return Err(shape_err("bernoulli_kl", tp, tq));
        }
        if let Some(v) = tp.data().iter().chain(tq.data()).find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Contract(format!("bernoulli_kl input {v} outside (0, 1)")));
        }
        let data = tp.data().iter().zip(tq.data()).map(|(&a, &b)| bernoulli_kl(a, b)).collect();
        let value = Tensor::new(tp.shape().to_vec(), data)?;
        self.push(Op::BernoulliKl(p, q), value, &[p, q])
    }

    /// `sum_i w_i * x_i` over same-shaped `x_i`, where each weight is a scalar
    /// node or `None` for an implicit weight of one. Terms are accumulated in
    /// the given order. An empty term list is rejected since it has no shape.
    pub fn weighted_sum(&mut self, terms: &[(Option<Var>, Var)]) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Contract("weighted_sum of zero terms".into()))?;
        let shape = self.value(first.1).shape().to_vec();
        let mut acc = vec![0.0; self.value(first.1).len()];
        for &(w, x) in terms {
            let tx = self.value(x);
            if tx.shape() != shape.as_slice() {
                return Err(shape_err("weighted_sum", self.value(first.1), tx));
            }
            let weight = match w {
                Some(w) => {
                    let tw = self.value(w);
                    if !tw.is_scalar() {
                        return Err(shape_err("weighted_sum", tw, tx));
                    }
                    tw.item()
                }
                None => 1.0,
            };
            for (a, v) in acc.iter_mut().zip(tx.data()) {
                *a += weight * v;
            }
        }
        let inputs: Vec<Var> = terms
            .iter()
            .flat_map(|&(w, x)| w.into_iter().chain(std::iter::once(x)))
            .collect();
        let value = Tensor::new(shape, acc)?;
        self.push(Op::WeightedSum(terms.to_vec()), value, &inputs)
    }

    /// Inputs of every rectifier and the distances to both bounds of every
    /// clamp, in tape order. Finite-difference checks compare these across
    /// perturbed evaluations to detect crossed kinks.
    pub fn kink_inputs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(x) => out.extend_from_slice(self.value(x).data()),
                Op::Clamp(x, lo, hi) => {
                    for &v in self.value(x).data() {
                        out.push(v - lo);
                        out.push(v - hi);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = &mut grads[v.0];
        let buf = slot.get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        contrib(buf);
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, a, |d| add_into(d, g));
                self.accumulate(grads, b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |d| add_into(d, g));
                self.accumulate(grads, b, |d| {
                    for (x, y) in d.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if ta.shape() == tb.shape() {
                    self.accumulate(grads, a, |d| {
                        for ((x, gi), bi) in d.iter_mut().zip(g).zip(tb.data()) {
                            *x += gi * bi;
                        }
                    });
                    self.accumulate(grads, b, |d| {
                        for ((x, gi), ai) in d.iter_mut().zip(g).zip(ta.data()) {
                            *x += gi * ai;
                        }
                    });
                } else if ta.is_scalar() {
                    let s = ta.item();
                    self.accumulate(grads, a, |d| {
                        d[0] += g.iter().zip(tb.data()).map(|(gi, bi)| gi * bi).sum::<f64>();
                    });
                    self.accumulate(grads, b, |d| {
                        for (x, gi) in d.iter_mut().zip(g) {
                            *x += gi * s;
                        }
                    });
                } else {
                    let s = tb.item();
                    self.accumulate(grads, a, |d| {
                        for (x, gi) in d.iter_mut().zip(g) {
                            *x += gi * s;
                        }
                    });
                    self.accumulate(grads, b, |d| {
                        d[0] += g.iter().zip(ta.data()).map(|(gi, ai)| gi * ai).sum::<f64>();
                    });
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, x, |d| {
                for (x, gi) in d.iter_mut().zip(g) {
                    *x += gi * c;
                }
            }),
            Op::Shift(x) => self.accumulate(grads, x, |d| add_into(d, g)),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, n) = (ta.shape()[0], ta.shape()[1]);
                let p = if tb.shape().len() == 1 { 1 } else { tb.shape()[1] };
                // dA = G Bᵀ, dB = Aᵀ G with G of shape [m, p]
                self.accumulate(grads, a, |d| {
                    let bd = tb.data();
                    for i in 0..m {
                        for j in 0..p {
                            let gij = g[i * p + j];
                            if gij == 0.0 {
                                continue;
                            }
                            let row = &mut d[i * n..(i + 1) * n];
                            for (l, r) in row.iter_mut().enumerate() {
                                *r += gij * bd[l * p + j];
                            }
                        }
                    }
                });
                self.accumulate(grads, b, |d| {
                    let ad = ta.data();
                    for i in 0..m {
                        let arow = &ad[i * n..(i + 1) * n];
                        for j in 0..p {
                            let gij = g[i * p + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (l, a) in arow.iter().enumerate() {
                                d[l * p + j] += a * gij;
                            }
                        }
                    }
                });
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    let slice = &g[offset..offset + len];
                    self.accumulate(grads, p, |d| add_into(d, slice));
                    offset += len;
                }
            }
            Op::Relu(x) => {
                let tx = self.value(x);
                self.accumulate(grads, x, |d| {
                    for ((r, gi), xi) in d.iter_mut().zip(g).zip(tx.data()) {
                        if *xi > 0.0 {
                            *r += gi;
                        }
                    }
                });
            }
            Op::Tanh(x) => self.accumulate(grads, x, |d| {
                for ((r, gi), y) in d.iter_mut().zip(g).zip(out.data()) {
                    *r += gi * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => self.accumulate(grads, x, |d| {
                for ((r, gi), y) in d.iter_mut().zip(g).zip(out.data()) {
                    *r += gi * y * (1.0 - y);
                }
            }),
            Op::Log(x) => {
                let tx = self.value(x);
                self.accumulate(grads, x, |d| {
                    for ((r, gi), xi) in d.iter_mut().zip(g).zip(tx.data()) {
                        *r += gi / xi;
                    }
                });
            }
            Op::Cos(x) => {
                let tx = self.value(x);
                self.accumulate(grads, x, |d| {
                    for ((r, gi), xi) in d.iter_mut().zip(g).zip(tx.data()) {
                        *r -= gi * xi.sin();
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, x, |d| {
                for r in d.iter_mut() {
                    *r += g[0];
                }
            }),
            Op::Clamp(x, lo, hi) => {
                let tx = self.value(x);
                self.accumulate(grads, x, |d| {
                    for ((r, gi), xi) in d.iter_mut().zip(g).zip(tx.data()) {
                        if *xi > lo && *xi < hi {
                            *r += gi;
                        }
                    }
                });
            }
            Op::WeightedSum(ref terms) => {
                for &(w, x) in terms {
                    let weight = w.map_or(1.0, |w| self.item(w));
                    let tx = self.value(x);
                    if let Some(w) = w {
                        self.accumulate(grads, w, |d| {
                            d[0] += g.iter().zip(tx.data()).map(|(gi, xi)| gi * xi).sum::<f64>();
                        });
                    }
                    self.accumulate(grads, x, |d| {
                        for (r, gi) in d.iter_mut().zip(g) {
                            *r += gi * weight;
                        }
                    });
                }
            }
            Op::BernoulliKl(p, q) => {
                let (tp, tq) = (self.value(p), self.value(q));
                self.accumulate(grads, p, |d| {
                    for (((r, gi), &a), &b) in d.iter_mut().zip(g).zip(tp.data()).zip(tq.data()) {
                        *r += gi * ((a / b).ln() - ((1.0 - a) / (1.0 - b)).ln());
                    }
                });
                self.accumulate(grads, q, |d| {
                    for (((r, gi), &a), &b) in d.iter_mut().zip(g).zip(tp.data()).zip(tq.data()) {
                        *r += gi * (b - a) / (b * (1.0 - b));
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Result of [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` is not on the path to
    /// the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to `v` shaped like its value; zeros when `v`
    /// does not influence the loss.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match self.get(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient shape mirrors value"),
            None => Tensor::zeros(&shape),
        }
    }
}
