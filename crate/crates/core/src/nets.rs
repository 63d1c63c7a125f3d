//! Policy and value network definitions: plain MLPs with a choice of
//! output head, plus the tanh-squashed Gaussian policy head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Axis, Graph, Tensor, Var};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside `log(1 - tanh(u)^2 + eps)` so saturated actions stay finite.
pub const TANH_EPS: f64 = 1e-6;
/// Scale applied to the final layer of policy heads at init.
pub const POLICY_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Plain,
    /// Final layer emits mean and log-std, so it is twice as wide.
    Gaussian,
    /// tanh on the output.
    DeterministicBounded,
    QValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        head: Head,
    ) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation,
            head,
        }
    }

    /// Width of the last affine layer.
    pub fn final_width(&self) -> usize {
        match self.head {
            Head::Gaussian => 2 * self.output_dim,
            _ => self.output_dim,
        }
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.final_width());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Network(format!(
                "zero-width layer in {}→{:?}→{}",
                self.input_dim, self.hidden, self.output_dim
            )));
        }
        Ok(())
    }

    fn is_policy(&self) -> bool {
        matches!(self.head, Head::Gaussian | Head::DeterministicBounded)
    }
}

/// Parameters are stored as `[W0, b0, W1, b1, ...]`, `W` being
/// `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<Tensor>,
}

impl Mlp {
    /// Weights uniform in ±1/√fan_in, zero biases; the last layer of a
    /// policy head is additionally scaled by [`POLICY_INIT_SCALE`].
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let mut params = Vec::with_capacity(2 * dims.len());
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if i == last && spec.is_policy() {
                POLICY_INIT_SCALE
            } else {
                1.0
            };
            let w = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-bound, bound) * scale)
                .collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::zeros(&[fan_out]));
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if params.len() != 2 * dims.len() {
            return Err(Error::Network(format!(
                "expected {} parameter tensors, got {}",
                2 * dims.len(),
                params.len()
            )));
        }
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            if params[2 * i].shape() != [fan_in, fan_out] || params[2 * i + 1].shape() != [fan_out]
            {
                return Err(Error::Network(format!("layer {i} has the wrong shape")));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Registers every parameter as a trainable leaf.
    pub fn register(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.params.iter().map(|p| g.param(p)).collect()
    }

    /// Registers every parameter as a constant.
    pub fn register_frozen(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.params.iter().map(|p| g.constant(p.clone())).collect()
    }

    /// Forward pass using previously registered parameter vars.
    pub fn forward_with(&self, g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let width = g.shape(x);
        if width.len() != 2 || width[1] != self.spec.input_dim {
            return Err(Error::Shape {
                op: "mlp_forward",
                lhs: width.to_vec(),
                rhs: vec![self.spec.input_dim],
            });
        }
        let layers = vars.len() / 2;
        let mut h = x;
        for layer in 0..layers {
            h = g.matmul(h, vars[2 * layer])?;
            h = g.add(h, vars[2 * layer + 1])?;
            if layer + 1 < layers {
                h = match self.spec.activation {
                    Activation::Relu => g.relu(h)?,
                    Activation::Tanh => g.tanh(h)?,
                };
            }
        }
        if self.spec.head == Head::DeterministicBounded {
            h = g.tanh(h)?;
        }
        Ok(h)
    }

    /// Trainable forward pass; returns the output and the parameter vars.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<(Var, Vec<Var>)> {
        let vars = self.register(g)?;
        let out = self.forward_with(g, &vars, x)?;
        Ok((out, vars))
    }

    /// Forward pass with parameters held constant.
    pub fn forward_frozen(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let vars = self.register_frozen(g)?;
        self.forward_with(g, &vars, x)
    }

    /// Plain evaluation on a batch, outside any caller graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone())?;
        let out = self.forward_frozen(&mut g, xv)?;
        Ok(g.value(out).clone())
    }
}

/// Box bounds the raw `(-1, 1)` action is rescaled to.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn unit(dim: usize) -> Self {
        Self {
            low: vec![-1.0; dim],
            high: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }
}

/// Output of the squashed Gaussian head. All members live in the graph
/// they were computed in.
#[derive(Clone, Debug)]
pub struct GaussianHeadOutput {
    /// `tanh(u)` rescaled to the bounds.
    pub action: Var,
    /// `n×1` log-density of the raw squashed action `tanh(u)`.
    pub log_prob: Var,
    pub pre_tanh: Var,
    /// `tanh(mean)` rescaled to the bounds.
    pub mean_action: Var,
}

/// Samples a tanh-squashed Gaussian action. In deterministic mode the
/// noise is zero, so the action is `tanh(mean)` and the log-density is
/// reported at `u = mean`.
pub fn gaussian_sample(
    g: &mut Graph,
    mean: Var,
    log_std: Var,
    rng: &mut Rng,
    deterministic: bool,
    bounds: &Bounds,
) -> Result<GaussianHeadOutput> {
    let shape = g.shape(mean).to_vec();
    let noise = if deterministic {
        Tensor::zeros(&shape)
    } else {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.normal()).collect())?
    };
    squashed_gaussian(g, mean, log_std, &noise, bounds)
}

/// Squashed Gaussian head evaluated at a given standard-normal `noise`.
pub fn squashed_gaussian(
    g: &mut Graph,
    mean: Var,
    log_std: Var,
    noise: &Tensor,
    bounds: &Bounds,
) -> Result<GaussianHeadOutput> {
    if !g.value(mean).is_finite() || !g.value(log_std).is_finite() {
        return Err(Error::NonFinite { op: "gaussian_sample" });
    }
    let shape = g.shape(mean).to_vec();
    if g.shape(log_std) != shape.as_slice() || noise.shape() != shape.as_slice() {
        return Err(Error::Shape {
            op: "gaussian_sample",
            lhs: shape,
            rhs: g.shape(log_std).to_vec(),
        });
    }
    if shape.len() != 2 || shape[1] != bounds.dim() {
        return Err(Error::Shape {
            op: "gaussian_sample",
            lhs: shape,
            rhs: vec![bounds.dim()],
        });
    }
    let log_std = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)?;
    let std = g.exp(log_std)?;
    let eps = g.constant(noise.clone())?;
    let spread = g.mul(std, eps)?;
    let u = g.add(mean, spread)?;
    let squashed = g.tanh(u)?;

    // log N(u; mean, std) = -eps^2/2 - log_std - ln(2π)/2
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let base = g.constant(noise.map(|e| -0.5 * e * e - half_ln_2pi))?;
    let normal_lp = g.sub(base, log_std)?;
    let sq = g.square(squashed)?;
    let neg_sq = g.neg(sq)?;
    let jac = g.add_scalar(neg_sq, 1.0 + TANH_EPS)?;
    let log_jac = g.log(jac)?;
    let per_dim = g.sub(normal_lp, log_jac)?;
    let log_prob = g.sum(per_dim, Axis::Cols)?;

    let mean_squashed = g.tanh(mean)?;
    let action = rescale(g, squashed, bounds)?;
    let mean_action = rescale(g, mean_squashed, bounds)?;
    Ok(GaussianHeadOutput {
        action,
        log_prob,
        pre_tanh: u,
        mean_action,
    })
}

fn rescale(g: &mut Graph, raw: Var, bounds: &Bounds) -> Result<Var> {
    if bounds.low.iter().all(|&l| l == -1.0) && bounds.high.iter().all(|&h| h == 1.0) {
        return Ok(raw);
    }
    let half: Vec<f64> = bounds
        .low
        .iter()
        .zip(&bounds.high)
        .map(|(l, h)| 0.5 * (h - l))
        .collect();
    let mid: Vec<f64> = bounds
        .low
        .iter()
        .zip(&bounds.high)
        .map(|(l, h)| 0.5 * (h + l))
        .collect();
    let half = g.constant(Tensor::vector(half))?;
    let mid = g.constant(Tensor::vector(mid))?;
    let scaled = g.mul(raw, half)?;
    g.add(scaled, mid)
}

/// Splits a Gaussian head output `n×2d` into `(mean, log_std)`.
pub fn split_gaussian(g: &mut Graph, out: Var) -> Result<(Var, Var)> {
    let width = g.shape(out)[1];
    let d = width / 2;
    let mean = g.slice_cols(out, 0, d)?;
    let log_std = g.slice_cols(out, d, width)?;
    Ok((mean, log_std))
}
