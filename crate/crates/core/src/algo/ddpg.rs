//! Deterministic-policy actor-critic: DDPG and TD3 share one actor and
//! one critic, TD3 adding target smoothing noise, a twin ensemble and a
//! policy delay.

use crate::agent::{
    export_adam, export_tensors, import_adam, import_tensors, polyak_update, ActMode, Actor,
    ActorOutput, Critic, CriticEnsemble, ParamMap, TargetContext,
};
use crate::error::Result;
use crate::nets::Mlp;
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct DeterministicActor {
    net: Mlp,
    target: Mlp,
    optimizer: Adam,
    /// Std of the Gaussian noise added when acting stochastically.
    pub exploration_noise: f64,
    /// Std of the target smoothing noise; zero disables it.
    pub target_noise: f64,
    pub target_noise_clip: f64,
}

impl DeterministicActor {
    pub fn new(
        net: Mlp,
        adam: AdamConfig,
        exploration_noise: f64,
        target_noise: f64,
        target_noise_clip: f64,
    ) -> Self {
        Self {
            optimizer: Adam::new(adam, net.params()),
            target: net.clone(),
            net,
            exploration_noise,
            target_noise,
            target_noise_clip,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    /// Target action with clipped smoothing noise, clipped to `[-1, 1]`.
    pub fn smoothed_target_action(&self, next_states: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let mut a = self.target.predict(next_states)?;
        if self.target_noise > 0.0 {
            let c = self.target_noise_clip;
            for v in a.data_mut() {
                let eps = (self.target_noise * rng.normal()).clamp(-c, c);
                *v = (*v + eps).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

impl Actor for DeterministicActor {
    fn act(&self, states: &Tensor, mode: ActMode, rng: &mut Rng) -> Result<Tensor> {
        let mut a = self.net.predict(states)?;
        if mode == ActMode::Stochastic && self.exploration_noise > 0.0 {
            for v in a.data_mut() {
                *v = (*v + self.exploration_noise * rng.normal()).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    fn target_context(&self, next_states: &Tensor, rng: &mut Rng) -> Result<TargetContext> {
        Ok(TargetContext::deterministic(
            self.smoothed_target_action(next_states, rng)?,
        ))
    }

    fn params(&self) -> &[Tensor] {
        self.net.params()
    }

    /// `−mean Q_0(s, μ(s))`.
    fn loss(
        &self,
        g: &mut Graph,
        params: &[Var],
        states: &Tensor,
        critics: &CriticEnsemble,
        _rng: &mut Rng,
    ) -> Result<(Var, ActorOutput)> {
        let s = g.constant(states.clone())?;
        let action = self.net.forward_with(g, params, s)?;
        let x = g.concat_cols(s, action)?;
        let q = critics.members()[0].forward_frozen(g, x)?;
        let mean = g.mean(q, Axis::All)?;
        let loss = g.neg(mean)?;
        Ok((loss, ActorOutput::new(action)))
    }

    fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()> {
        self.optimizer.step(self.net.params_mut(), grads)
    }

    fn update_target(&mut self, tau: f64) -> Result<()> {
        polyak_update(self.net.params(), self.target.params_mut(), tau)
    }

    fn export(&self, prefix: &str, out: &mut ParamMap) {
        export_tensors(&format!("{prefix}.net"), self.net.params(), out);
        export_tensors(&format!("{prefix}.target"), self.target.params(), out);
        export_adam(&format!("{prefix}.adam"), &self.optimizer, out);
    }

    fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()> {
        import_tensors(&format!("{prefix}.net"), self.net.params_mut(), src)?;
        import_tensors(&format!("{prefix}.target"), self.target.params_mut(), src)?;
        import_adam(&format!("{prefix}.adam"), &mut self.optimizer, src)
    }
}

/// Critic with the standard Bellman backup.
#[derive(Clone, Debug)]
pub struct QCritic {
    ensemble: CriticEnsemble,
    gamma: f64,
}

impl QCritic {
    pub fn new(ensemble: CriticEnsemble, gamma: f64) -> Self {
        Self { ensemble, gamma }
    }
}

impl Critic for QCritic {
    fn ensemble(&self) -> &CriticEnsemble {
        &self.ensemble
    }

    fn ensemble_mut(&mut self) -> &mut CriticEnsemble {
        &mut self.ensemble
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}
