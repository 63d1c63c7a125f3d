//! Soft actor-critic with a tanh-squashed Gaussian policy and a learned
//! entropy temperature.

use std::collections::BTreeMap;

use crate::agent::{
    bellman_backup, export_adam, export_tensors, import_adam, import_tensors, lookup, ActMode,
    Actor, ActorOutput, Critic, CriticEnsemble, LossReport, ParamMap, TargetContext,
};
use crate::buffer::Batch;
use crate::error::{Error, Result};
use crate::nets::{gaussian_sample, split_gaussian, Bounds, GaussianHeadOutput, Head, Mlp};
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct SacActor {
    net: Mlp,
    optimizer: Adam,
    log_alpha: Tensor,
    alpha_optimizer: Adam,
    /// `H̄ = −dim(A)`.
    pub target_entropy: f64,
}

impl SacActor {
    pub fn new(net: Mlp, adam: AdamConfig, alpha_adam: AdamConfig, init_alpha: f64) -> Result<Self> {
        if net.spec().head != Head::Gaussian {
            return Err(Error::Network("SAC needs a Gaussian policy head".into()));
        }
        if !(init_alpha > 0.0 && init_alpha.is_finite()) {
            return Err(Error::Config(format!("initial alpha must be positive, got {init_alpha}")));
        }
        let log_alpha = Tensor::scalar(init_alpha.ln());
        Ok(Self {
            optimizer: Adam::new(adam, net.params()),
            alpha_optimizer: Adam::new(alpha_adam, std::slice::from_ref(&log_alpha)),
            target_entropy: -(net.spec().output_dim as f64),
            log_alpha,
            net,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.item().exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha.item()
    }

    fn bounds(&self) -> Bounds {
        Bounds::unit(self.net.spec().output_dim)
    }

    /// Policy sample at `states` inside `g`, with the given parameter vars.
    pub fn sample(
        &self,
        g: &mut Graph,
        params: &[Var],
        states: Var,
        rng: &mut Rng,
        deterministic: bool,
    ) -> Result<GaussianHeadOutput> {
        let out = self.net.forward_with(g, params, states)?;
        let (mean, log_std) = split_gaussian(g, out)?;
        gaussian_sample(g, mean, log_std, rng, deterministic, &self.bounds())
    }

    fn sample_frozen(&self, states: &Tensor, rng: &mut Rng, deterministic: bool) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let params = self.net.register_frozen(&mut g)?;
        let s = g.constant(states.clone())?;
        let h = self.sample(&mut g, &params, s, rng, deterministic)?;
        Ok((g.value(h.action).clone(), g.value(h.log_prob).clone()))
    }

    /// `(loss_alpha, ∂loss/∂log α)` for `loss = −mean(log α·(log π + H̄))`.
    pub fn temperature_loss(&self, log_probs: &[f64]) -> (f64, f64) {
        let m = log_probs.iter().map(|lp| lp + self.target_entropy).sum::<f64>()
            / log_probs.len() as f64;
        (-self.log_alpha() * m, -m)
    }
}

impl Actor for SacActor {
    fn act(&self, states: &Tensor, mode: ActMode, rng: &mut Rng) -> Result<Tensor> {
        Ok(self.sample_frozen(states, rng, mode == ActMode::Deterministic)?.0)
    }

    fn target_context(&self, next_states: &Tensor, rng: &mut Rng) -> Result<TargetContext> {
        let (a, lp) = self.sample_frozen(next_states, rng, false)?;
        Ok(TargetContext {
            next_action: a,
            log_prob: Some(lp),
            alpha: Some(self.alpha()),
        })
    }

    fn params(&self) -> &[Tensor] {
        self.net.params()
    }

    /// `mean(α·log π(ã|s) − min_i Q_i(s, ã))`.
    fn loss(
        &self,
        g: &mut Graph,
        params: &[Var],
        states: &Tensor,
        critics: &CriticEnsemble,
        rng: &mut Rng,
    ) -> Result<(Var, ActorOutput)> {
        let s = g.constant(states.clone())?;
        let h = self.sample(g, params, s, rng, false)?;
        let qs = critics.q_graph(g, s, h.action)?;
        let q = critics.reduce_graph(g, &qs)?;
        let weighted = g.scale(h.log_prob, self.alpha())?;
        let diff = g.sub(weighted, q)?;
        let loss = g.mean(diff, Axis::All)?;
        let out = ActorOutput {
            action: h.action,
            log_prob: Some(h.log_prob),
            aux: BTreeMap::from([("pre_tanh", h.pre_tanh), ("mean_action", h.mean_action)]),
        };
        Ok((loss, out))
    }

    fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()> {
        self.optimizer.step(self.net.params_mut(), grads)
    }

    /// Temperature step on the log-probabilities of the actor sample.
    fn after_update(&mut self, g: &Graph, out: &ActorOutput) -> Result<LossReport> {
        let lp = out.log_prob.ok_or(Error::MissingContext("log_prob"))?;
        let (loss_alpha, grad) = self.temperature_loss(g.value(lp).data());
        self.alpha_optimizer.step(
            std::slice::from_mut(&mut self.log_alpha),
            &[Tensor::scalar(grad)],
        )?;
        Ok(LossReport::from([
            ("loss_alpha".to_string(), loss_alpha),
            ("alpha".to_string(), self.alpha()),
        ]))
    }

    fn export(&self, prefix: &str, out: &mut ParamMap) {
        export_tensors(&format!("{prefix}.net"), self.net.params(), out);
        export_adam(&format!("{prefix}.adam"), &self.optimizer, out);
        out.insert(format!("{prefix}.log_alpha"), self.log_alpha.clone());
        export_adam(&format!("{prefix}.alpha_adam"), &self.alpha_optimizer, out);
    }

    fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()> {
        import_tensors(&format!("{prefix}.net"), self.net.params_mut(), src)?;
        import_adam(&format!("{prefix}.adam"), &mut self.optimizer, src)?;
        let key = format!("{prefix}.log_alpha");
        let la = lookup(src, &key)?;
        if la.len() != 1 {
            return Err(Error::Param(key));
        }
        self.log_alpha = Tensor::scalar(la.item());
        import_adam(&format!("{prefix}.alpha_adam"), &mut self.alpha_optimizer, src)
    }
}

/// Critic whose bootstrap subtracts the entropy term.
#[derive(Clone, Debug)]
pub struct SacCritic {
    ensemble: CriticEnsemble,
    gamma: f64,
}

impl SacCritic {
    pub fn new(ensemble: CriticEnsemble, gamma: f64) -> Self {
        Self { ensemble, gamma }
    }

    /// `target_reduced(s′, ã′) − α·log π(ã′|s′)`.
    pub fn soft_bootstrap(&self, batch: &Batch, ctx: &TargetContext) -> Result<Tensor> {
        let log_prob = ctx.require_log_prob()?;
        let alpha = ctx.require_alpha()?;
        let q = self
            .ensemble
            .target_reduced(&batch.next_states, &ctx.next_action)?;
        let data = q
            .data()
            .iter()
            .zip(log_prob.data())
            .map(|(q, lp)| q - alpha * lp)
            .collect();
        Tensor::new(q.shape().to_vec(), data)
    }
}

impl Critic for SacCritic {
    fn ensemble(&self) -> &CriticEnsemble {
        &self.ensemble
    }

    fn ensemble_mut(&mut self) -> &mut CriticEnsemble {
        &mut self.ensemble
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn get_bellman_target(&self, batch: &Batch, ctx: &TargetContext) -> Result<Tensor> {
        let soft = self.soft_bootstrap(batch, ctx)?;
        bellman_backup(batch, self.gamma, &soft)
    }
}
