//! Random computation graphs over the full op set, for gradient checks.
#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;
pub mod runs;

use rlkit::{Axis, Graph, Result, Rng, Tensor, Var};

#[derive(Clone, Debug)]
pub enum Instr {
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Minimum(usize, usize),
    BiasAdd(usize),
    Neg(usize),
    Exp(usize),
    /// `log(x² + 0.5)`.
    Log(usize),
    Tanh(usize),
    Relu(usize),
    Softplus(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    Scale(usize, f64),
    AddScalar(usize, f64),
    MatMulParam(usize),
    MatMulConst(usize, Tensor),
    Sum(usize, Axis),
    Mean(usize, Axis),
    ConcatSlice(usize, usize, usize),
    LogSoftmax(usize),
    Sin(usize),
}

pub const ALL_KINDS: [&str; 22] = [
    "Add",
    "Sub",
    "Mul",
    "Minimum",
    "BiasAdd",
    "Neg",
    "Exp",
    "Log",
    "Tanh",
    "Relu",
    "Softplus",
    "Square",
    "Clamp",
    "Scale",
    "AddScalar",
    "MatMulParam",
    "MatMulConst",
    "Sum",
    "Mean",
    "ConcatSlice",
    "LogSoftmax",
    "Sin",
];

impl Instr {
    pub fn kind(&self) -> &'static str {
        match self {
            Instr::Add(..) => "Add",
            Instr::Sub(..) => "Sub",
            Instr::Mul(..) => "Mul",
            Instr::Minimum(..) => "Minimum",
            Instr::BiasAdd(..) => "BiasAdd",
            Instr::Neg(..) => "Neg",
            Instr::Exp(..) => "Exp",
            Instr::Log(..) => "Log",
            Instr::Tanh(..) => "Tanh",
            Instr::Relu(..) => "Relu",
            Instr::Softplus(..) => "Softplus",
            Instr::Square(..) => "Square",
            Instr::Clamp(..) => "Clamp",
            Instr::Scale(..) => "Scale",
            Instr::AddScalar(..) => "AddScalar",
            Instr::MatMulParam(..) => "MatMulParam",
            Instr::MatMulConst(..) => "MatMulConst",
            Instr::Sum(..) => "Sum",
            Instr::Mean(..) => "Mean",
            Instr::ConcatSlice(..) => "ConcatSlice",
            Instr::LogSoftmax(..) => "LogSoftmax",
            Instr::Sin(..) => "Sin",
        }
    }
}

/// A straight-line program over three parameter inputs:
/// `X` (n×d), `W` (d×d) and a bias vector `v` (d).
#[derive(Clone, Debug)]
pub struct Program {
    pub points: Vec<Tensor>,
    pub instrs: Vec<Instr>,
}

fn random_tensor(rng: &mut Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-scale, scale)).collect()).unwrap()
}

const KINK_MARGIN: f64 = 1e-3;
const MAX_ABS: f64 = 20.0;

impl Program {
    /// Applies one instruction, returning the new var.
    fn apply(g: &mut Graph, pool: &[Var], inputs: &[Var], ins: &Instr) -> Result<Var> {
        Ok(match ins {
            Instr::Add(a, b) => g.add(pool[*a], pool[*b])?,
            Instr::Sub(a, b) => g.sub(pool[*a], pool[*b])?,
            Instr::Mul(a, b) => g.mul(pool[*a], pool[*b])?,
            Instr::Minimum(a, b) => g.minimum(pool[*a], pool[*b])?,
            Instr::BiasAdd(a) => g.add(pool[*a], inputs[2])?,
            Instr::Neg(a) => g.neg(pool[*a])?,
            Instr::Exp(a) => g.exp(pool[*a])?,
            Instr::Log(a) => {
                let sq = g.square(pool[*a])?;
                let shifted = g.add_scalar(sq, 0.5)?;
                g.log(shifted)?
            }
            Instr::Tanh(a) => g.tanh(pool[*a])?,
            Instr::Relu(a) => g.relu(pool[*a])?,
            Instr::Softplus(a) => g.softplus(pool[*a])?,
            Instr::Square(a) => g.square(pool[*a])?,
            Instr::Clamp(a, lo, hi) => g.clamp(pool[*a], *lo, *hi)?,
            Instr::Scale(a, c) => g.scale(pool[*a], *c)?,
            Instr::AddScalar(a, c) => g.add_scalar(pool[*a], *c)?,
            Instr::MatMulParam(a) => g.matmul(pool[*a], inputs[1])?,
            Instr::MatMulConst(a, m) => {
                let c = g.constant(m.clone())?;
                g.matmul(pool[*a], c)?
            }
            Instr::Sum(a, axis) => g.sum(pool[*a], *axis)?,
            Instr::Mean(a, axis) => g.mean(pool[*a], *axis)?,
            Instr::ConcatSlice(a, b, start) => {
                let cat = g.concat_cols(pool[*a], pool[*b])?;
                let width = g.shape(pool[*a])[1];
                g.slice_cols(cat, *start, *start + width)?
            }
            Instr::LogSoftmax(a) => g.log_softmax(pool[*a])?,
            Instr::Sin(a) => g.custom_elementwise(pool[*a], f64::sin, f64::cos)?,
        })
    }

    /// Runs the program; the loss is the sum of the means of every node.
    pub fn run(&self, g: &mut Graph, inputs: &[Var]) -> Result<Var> {
        let mut pool = vec![inputs[0]];
        for ins in &self.instrs {
            let v = Self::apply(g, &pool, inputs, ins)?;
            pool.push(v);
        }
        let mut total = g.mean(pool[0], Axis::All)?;
        for &v in &pool[1..] {
            let m = g.mean(v, Axis::All)?;
            total = g.add(total, m)?;
        }
        Ok(total)
    }

    /// Draws a program of `len` instructions whose intermediate values
    /// stay bounded and away from the kinks of relu, clamp and minimum.
    pub fn random(rng: &mut Rng, len: usize) -> Program {
        let n = 2 + rng.below(3);
        let d = 2 + rng.below(3);
        let points = vec![
            random_tensor(rng, &[n, d], 1.0),
            random_tensor(rng, &[d, d], 0.8),
            random_tensor(rng, &[d], 0.5),
        ];
        Self::random_on(rng, points, len)
    }

    /// Like [`Program::random`] over given input points.
    pub fn random_on(rng: &mut Rng, points: Vec<Tensor>, len: usize) -> Program {
        loop {
            if let Some(p) = Self::try_random(rng, &points, len) {
                return p;
            }
        }
    }

    fn try_random(rng: &mut Rng, points: &[Tensor], len: usize) -> Option<Program> {
        let d = points[2].len();
        let mut g = Graph::new();
        let inputs: Vec<Var> = points.iter().map(|p| g.param(p).unwrap()).collect();
        let mut pool = vec![inputs[0]];
        let mut instrs = Vec::with_capacity(len);
        while instrs.len() < len {
            let a = rng.below(pool.len());
            let shape = g.shape(pool[a]).to_vec();
            let same: Vec<usize> = (0..pool.len())
                .filter(|&j| g.shape(pool[j]) == shape.as_slice())
                .collect();
            let b = same[rng.below(same.len())];
            let is_matrix = shape.len() == 2;
            let ins = match rng.below(22) {
                0 => Instr::Add(a, b),
                1 => Instr::Sub(a, b),
                2 => Instr::Mul(a, b),
                3 => Instr::Minimum(a, b),
                4 if is_matrix && shape[1] == d => Instr::BiasAdd(a),
                5 => Instr::Neg(a),
                6 => Instr::Exp(a),
                7 => Instr::Log(a),
                8 => Instr::Tanh(a),
                9 => Instr::Relu(a),
                10 => Instr::Softplus(a),
                11 => Instr::Square(a),
                12 => {
                    let lo = rng.uniform(-1.0, 0.0);
                    Instr::Clamp(a, lo, lo + rng.uniform(0.2, 1.5))
                }
                13 => Instr::Scale(a, rng.uniform(-2.0, 2.0)),
                14 => Instr::AddScalar(a, rng.uniform(-1.0, 1.0)),
                15 if is_matrix && shape[1] == d => Instr::MatMulParam(a),
                16 if is_matrix => {
                    let out = 1 + rng.below(4);
                    Instr::MatMulConst(a, random_tensor(rng, &[shape[1], out], 1.0))
                }
                17 if is_matrix => Instr::Sum(a, [Axis::Rows, Axis::Cols, Axis::All][rng.below(3)]),
                18 if is_matrix => Instr::Mean(a, [Axis::Rows, Axis::Cols, Axis::All][rng.below(3)]),
                19 if is_matrix => Instr::ConcatSlice(a, b, rng.below(shape[1] + 1)),
                20 if is_matrix => Instr::LogSoftmax(a),
                21 => Instr::Sin(a),
                _ => continue,
            };
            let v = Self::apply(&mut g, &pool, &inputs, &ins).ok()?;
            let out = g.value(v);
            if out.data().iter().any(|x| x.abs() > MAX_ABS) {
                return None;
            }
            let near = |x: f64, k: f64| (x - k).abs() < KINK_MARGIN;
            let input = g.value(pool[a]).clone();
            let kinked = match &ins {
                Instr::Relu(_) => input.data().iter().any(|&x| near(x, 0.0)),
                Instr::Clamp(_, lo, hi) => input.data().iter().any(|&x| near(x, *lo) || near(x, *hi)),
                Instr::Minimum(_, bi) => {
                    let other = g.value(pool[*bi]);
                    a != *bi && input.data().iter().zip(other.data()).any(|(&x, &y)| near(x, y))
                }
                _ => false,
            };
            if kinked {
                return None;
            }
            pool.push(v);
            instrs.push(ins);
        }
        Some(Program {
            points: points.to_vec(),
            instrs,
        })
    }
}
