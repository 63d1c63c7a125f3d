use std::collections::HashMap;

use super::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction axis. Reducing a matrix along an axis keeps it rank 2
/// (`n×d` → `1×d` or `n×1`); reducing everything yields a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    All,
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Scale(Var, f64),
    AddScalar(Var),
    Minimum(Var, Var),
    MatMul(Var, Var),
    Sum(Var, Axis),
    Mean(Var, Axis),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    LogSoftmax(Var),
    /// Elementwise op with derivative values captured at forward time.
    Custom(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: bool,
}

/// One recorded forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar loss with respect to every parameter leaf of the
/// graph that produced it. Unreachable parameters map to zeros.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    /// Gradients for `vars`, in order. Panics on a var that is not a
    /// parameter leaf of the originating graph.
    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter()
            .map(|v| {
                self.grads
                    .get(v)
                    .cloned()
                    .expect("gradient requested for a non-parameter var")
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.grads.keys().copied()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            Err(Error::GraphConsumed)
        } else {
            Ok(())
        }
    }

    fn leaf(&mut self, value: Tensor, param: bool) -> Result<Var> {
        self.check_live()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: param,
            param,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf: backward reports a gradient for it.
    pub fn param(&mut self, value: &Tensor) -> Result<Var> {
        self.leaf(value.clone(), true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// A constant copy of `v`'s current value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        self.check_live()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check_live()?;
        let value = self.value(a).map(f);
        self.push(name, value, op, &[a])
    }

    /// Validates a binary elementwise pairing: equal shapes, or `b` a
    /// length-`d` vector broadcast across the rows of an `n×d` matrix.
    fn binary_shapes(&self, name: &'static str, a: Var, b: Var) -> Result<bool> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(false);
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            return Ok(true);
        }
        Err(Error::Shape {
            op: name,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check_live()?;
        let broadcast = self.binary_shapes(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let value = if broadcast {
            let d = tb.len();
            let data = ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, tb.data()[i % d]))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)?
        };
        self.push(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum of two equally shaped tensors. Ties route the
    /// gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op: "minimum",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        self.binary("minimum", a, b, f64::min, Op::Minimum(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary("neg", a, |x| -x, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    /// Natural log. Non-positive inputs are an error; callers clamp first.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain { op: "log", value: bad });
        }
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::InvalidTensor(format!("clamp bounds {lo} > {hi}")));
        }
        self.unary("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * c, Op::Scale(a, c))
    }

    /// Adds a constant.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    /// User-supplied elementwise function `f` with derivative `df`.
    pub fn custom_elementwise(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Result<Var> {
        self.check_live()?;
        let input = self.value(a);
        let deriv = input.data().iter().map(|&x| df(x)).collect();
        let value = input.map(f);
        self.push("custom", value, Op::Custom(a, deriv), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn reduced_shape(&self, a: Var, axis: Axis) -> Result<(Vec<usize>, usize)> {
        let t = self.value(a);
        match (axis, t.rank()) {
            (Axis::All, _) => Ok((Vec::new(), t.len())),
            (Axis::Rows, 2) => Ok((vec![1, t.cols()], t.rows())),
            (Axis::Cols, 2) => Ok((vec![t.rows(), 1], t.cols())),
            (Axis::Rows, 1) => Ok((Vec::new(), t.len())),
            (axis, rank) => Err(Error::InvalidAxis {
                axis: if axis == Axis::Rows { 0 } else { 1 },
                rank,
            }),
        }
    }

    fn reduce_sum(&self, a: Var, axis: Axis) -> Result<(Tensor, usize)> {
        let (shape, count) = self.reduced_shape(a, axis)?;
        let t = self.value(a);
        let out = match (axis, t.rank()) {
            (Axis::Rows, 2) => {
                let mut acc = vec![0.0; t.cols()];
                for r in 0..t.rows() {
                    for (s, v) in acc.iter_mut().zip(t.row(r)) {
                        *s += v;
                    }
                }
                acc
            }
            (Axis::Cols, 2) => (0..t.rows()).map(|r| t.row(r).iter().sum()).collect(),
            _ => vec![t.data().iter().sum()],
        };
        Ok((Tensor::new(shape, out)?, count))
    }

    pub fn sum(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check_live()?;
        let (value, _) = self.reduce_sum(a, axis)?;
        self.push("sum", value, Op::Sum(a, axis), &[a])
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Result<Var> {
        self.check_live()?;
        let (value, count) = self.reduce_sum(a, axis)?;
        let value = value.map(|s| s / count as f64);
        self.push("mean", value, Op::Mean(a, axis), &[a])
    }

    /// `[a | b]` for matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (n, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for r in 0..n {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let value = Tensor::matrix(n, ca + cb, data)?;
        self.push("concat_cols", value, Op::ConcatCols(a, b), &[a, b])
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.check_live()?;
        let t = self.value(a);
        if t.rank() != 2 || start >= end || end > t.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let n = t.rows();
        let mut data = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let value = Tensor::matrix(n, end - start, data)?;
        self.push("slice_cols", value, Op::SliceCols(a, start), &[a])
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::Shape {
                op: "log_softmax",
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            let row = t.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        self.push("log_softmax", value, Op::LogSoftmax(a), &[a])
    }

    /// Reverse sweep from a scalar `loss`. Consumes the graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check_live()?;
        if loss.0 >= self.nodes.len() {
            return Err(Error::UnknownVar);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::NotScalar(self.shape(loss).to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream, &mut grads);
            grads[i] = Some(upstream);
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.param)
            .map(|(i, n)| {
                let g = grads[i].take().unwrap_or_else(|| Tensor::zeros_like(&n.value));
                (Var(i), g)
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, contrib: Tensor) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(g) => {
                for (acc, c) in g.data_mut().iter_mut().zip(contrib.data()) {
                    *acc += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Gradient for the second operand of a possibly broadcasting binary
    /// op, folding rows back into a vector when `b` was broadcast.
    fn fold_broadcast(&self, b: Var, full: Tensor) -> Tensor {
        let sb = self.shape(b);
        if full.shape() == sb {
            return full;
        }
        let d = sb[0];
        let mut acc = vec![0.0; d];
        for (i, v) in full.data().iter().enumerate() {
            acc[i % d] += v;
        }
        Tensor::vector(acc)
    }

    fn propagate(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[i].value;
        let zip_map = |src: &Tensor, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            // f(upstream, input, output)
            let data = up
                .data()
                .iter()
                .zip(src.data())
                .zip(out.data())
                .map(|((&u, &x), &y)| f(u, x, y))
                .collect();
            Tensor::new(out.shape().to_vec(), data).expect("shape preserved")
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                let gb = self.fold_broadcast(*b, up.clone());
                self.accumulate(grads, *b, gb);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone());
                let gb = self.fold_broadcast(*b, up.map(|u| -u));
                self.accumulate(grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let d = tb.len();
                if self.requires_grad(*a) {
                    let data = up
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(k, u)| u * tb.data()[k % d])
                        .collect();
                    let ga = Tensor::new(ta.shape().to_vec(), data).expect("shape");
                    self.accumulate(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let data = up.data().iter().zip(ta.data()).map(|(u, x)| u * x).collect();
                    let full = Tensor::new(ta.shape().to_vec(), data).expect("shape");
                    let gb = self.fold_broadcast(*b, full);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut ga = Vec::with_capacity(up.len());
                let mut gb = Vec::with_capacity(up.len());
                for ((&u, &x), &y) in up.data().iter().zip(ta.data()).zip(tb.data()) {
                    if x <= y {
                        ga.push(u);
                        gb.push(0.0);
                    } else {
                        ga.push(0.0);
                        gb.push(u);
                    }
                }
                let shape = ta.shape().to_vec();
                self.accumulate(grads, *a, Tensor::new(shape.clone(), ga).expect("shape"));
                self.accumulate(grads, *b, Tensor::new(shape, gb).expect("shape"));
            }
            Op::Neg(a) => self.accumulate(grads, *a, up.map(|u| -u)),
            Op::Exp(a) => {
                let g = zip_map(self.value(*a), &|u, _, y| u * y);
                self.accumulate(grads, *a, g);
            }
            Op::Log(a) => {
                let g = zip_map(self.value(*a), &|u, x, _| u / x);
                self.accumulate(grads, *a, g);
            }
            Op::Tanh(a) => {
                let g = zip_map(self.value(*a), &|u, _, y| u * (1.0 - y * y));
                self.accumulate(grads, *a, g);
            }
            Op::Relu(a) => {
                let g = zip_map(self.value(*a), &|u, x, _| if x > 0.0 { u } else { 0.0 });
                self.accumulate(grads, *a, g);
            }
            Op::Softplus(a) => {
                let g = zip_map(self.value(*a), &|u, x, _| u * sigmoid(x));
                self.accumulate(grads, *a, g);
            }
            Op::Square(a) => {
                let g = zip_map(self.value(*a), &|u, x, _| 2.0 * u * x);
                self.accumulate(grads, *a, g);
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let g = zip_map(self.value(*a), &|u, x, _| {
                    if x >= lo && x <= hi {
                        u
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, g);
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, up.map(|u| u * c)),
            Op::AddScalar(a) => self.accumulate(grads, *a, up.clone()),
            Op::Custom(a, deriv) => {
                let data = up.data().iter().zip(deriv).map(|(u, d)| u * d).collect();
                let g = Tensor::new(out.shape().to_vec(), data).expect("shape");
                self.accumulate(grads, *a, g);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                if self.requires_grad(*a) {
                    // dA = dC · Bᵀ
                    let mut ga = vec![0.0; n * k];
                    gemm(n, m, k, up.data(), false, tb.data(), true, &mut ga, 0.0);
                    self.accumulate(grads, *a, Tensor::matrix(n, k, ga).expect("shape"));
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dC
                    let mut gb = vec![0.0; k * m];
                    gemm(k, n, m, ta.data(), true, up.data(), false, &mut gb, 0.0);
                    self.accumulate(grads, *b, Tensor::matrix(k, m, gb).expect("shape"));
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let ta = self.value(*a);
                let divisor = match self.nodes[i].op {
                    Op::Mean(..) => self.reduced_shape(*a, *axis).expect("validated").1 as f64,
                    _ => 1.0,
                };
                let cols = ta.cols();
                let data = (0..ta.len())
                    .map(|k| {
                        let u = match (axis, ta.rank()) {
                            (Axis::Rows, 2) => up.data()[k % cols],
                            (Axis::Cols, 2) => up.data()[k / cols],
                            _ => up.data()[0],
                        };
                        u / divisor
                    })
                    .collect();
                let g = Tensor::new(ta.shape().to_vec(), data).expect("shape");
                self.accumulate(grads, *a, g);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let n = up.rows();
                let mut ga = Vec::with_capacity(n * ca);
                let mut gb = Vec::with_capacity(n * cb);
                for r in 0..n {
                    let row = up.row(r);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, Tensor::matrix(n, ca, ga).expect("shape"));
                self.accumulate(grads, *b, Tensor::matrix(n, cb, gb).expect("shape"));
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let width = up.cols();
                let mut g = Tensor::zeros_like(ta);
                let cols = ta.cols();
                for r in 0..ta.rows() {
                    g.data_mut()[r * cols + start..r * cols + start + width]
                        .copy_from_slice(up.row(r));
                }
                self.accumulate(grads, *a, g);
            }
            Op::LogSoftmax(a) => {
                let cols = out.cols();
                let mut data = Vec::with_capacity(out.len());
                for r in 0..out.rows() {
                    let u = up.row(r);
                    let total: f64 = u.iter().sum();
                    data.extend(
                        out.row(r)
                            .iter()
                            .zip(u)
                            .map(|(y, g)| g - y.exp() * total),
                    );
                }
                let g = Tensor::matrix(out.rows(), cols, data).expect("shape");
                self.accumulate(grads, *a, g);
            }
        }
    }
}
