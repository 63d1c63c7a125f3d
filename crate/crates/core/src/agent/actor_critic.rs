use super::{
    check_state_dim, export_counter, import_counter, ActMode, Agent, CriticEnsemble, LossReport,
    ParamMap,
};
use crate::algo::AlgoId;
use crate::buffer::{Batch, ReplayBuffer, Transition};
use crate::env::Action;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, Var};

/// Keyed extras the Bellman target may need beyond the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetContext {
    /// Next actions `ã′`, `n×dim(A)`.
    pub next_action: Tensor,
    /// `log π(ã′|s′)`, `n×1`.
    pub log_prob: Option<Tensor>,
    pub alpha: Option<f64>,
}

impl TargetContext {
    pub fn deterministic(next_action: Tensor) -> Self {
        Self {
            next_action,
            log_prob: None,
            alpha: None,
        }
    }

    pub fn require_log_prob(&self) -> Result<&Tensor> {
        self.log_prob.as_ref().ok_or(Error::MissingContext("log_prob"))
    }

    pub fn require_alpha(&self) -> Result<f64> {
        self.alpha.ok_or(Error::MissingContext("alpha"))
    }
}

/// What an actor's loss produced besides the loss itself.
#[derive(Clone, Debug)]
pub struct ActorOutput {
    pub action: Var,
    pub log_prob: Option<Var>,
    pub aux: std::collections::BTreeMap<&'static str, Var>,
}

impl ActorOutput {
    pub fn new(action: Var) -> Self {
        Self {
            action,
            log_prob: None,
            aux: Default::default(),
        }
    }
}

pub trait Actor {
    /// Actions for a batch of states, in `[-1, 1]^dim(A)`.
    fn act(&self, states: &Tensor, mode: ActMode, rng: &mut Rng) -> Result<Tensor>;

    /// Next-state actions (and extras) for the critic target.
    fn target_context(&self, next_states: &Tensor, rng: &mut Rng) -> Result<TargetContext>;

    fn params(&self) -> &[Tensor];

    /// Actor loss over `states`; `params` are this actor's registered
    /// trainable leaves, in [`Actor::params`] order.
    fn loss(
        &self,
        g: &mut Graph,
        params: &[Var],
        states: &Tensor,
        critics: &CriticEnsemble,
        rng: &mut Rng,
    ) -> Result<(Var, ActorOutput)>;

    fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()>;

    /// Runs after the parameter step with the finished loss graph.
    fn after_update(&mut self, _g: &Graph, _out: &ActorOutput) -> Result<LossReport> {
        Ok(LossReport::new())
    }

    fn update(
        &mut self,
        states: &Tensor,
        critics: &CriticEnsemble,
        rng: &mut Rng,
    ) -> Result<LossReport> {
        let mut g = Graph::new();
        let vars = self
            .params()
            .iter()
            .map(|p| g.param(p))
            .collect::<Result<Vec<_>>>()?;
        let (loss, out) = self.loss(&mut g, &vars, states, critics, rng)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        self.apply_gradients(&grads.collect(&vars))?;
        let mut report = self.after_update(&g, &out)?;
        report.insert("loss_actor".into(), value);
        Ok(report)
    }

    fn update_target(&mut self, _tau: f64) -> Result<()> {
        Ok(())
    }

    fn export(&self, prefix: &str, out: &mut ParamMap);

    fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()>;
}

/// `r + γ·(1 − terminated)·bootstrap`, row by row.
pub fn bellman_backup(batch: &Batch, gamma: f64, bootstrap: &Tensor) -> Result<Tensor> {
    if bootstrap.len() != batch.len() {
        return Err(Error::Shape {
            op: "bellman_backup",
            lhs: bootstrap.shape().to_vec(),
            rhs: vec![batch.len(), 1],
        });
    }
    let y = batch
        .rewards
        .data()
        .iter()
        .zip(batch.terminated.data())
        .zip(bootstrap.data())
        .map(|((&r, &done), &b)| if done == 1.0 { r } else { r + gamma * b })
        .collect();
    Ok(Tensor::column(y))
}

pub trait Critic {
    fn ensemble(&self) -> &CriticEnsemble;

    fn ensemble_mut(&mut self) -> &mut CriticEnsemble;

    fn gamma(&self) -> f64;

    /// Regression targets for the batch. The base form bootstraps from the
    /// reduced target ensemble at `(s′, ã′)`.
    fn get_bellman_target(&self, batch: &Batch, ctx: &TargetContext) -> Result<Tensor> {
        let q = self
            .ensemble()
            .target_reduced(&batch.next_states, &ctx.next_action)?;
        bellman_backup(batch, self.gamma(), &q)
    }

    fn update(&mut self, batch: &Batch, ctx: &TargetContext) -> Result<f64> {
        let y = self.get_bellman_target(batch, ctx)?;
        self.ensemble_mut().fit(batch, &y)
    }

    fn export(&self, prefix: &str, out: &mut ParamMap) {
        self.ensemble().export(prefix, out);
    }

    fn import(&mut self, prefix: &str, src: &ParamMap) -> Result<()> {
        self.ensemble_mut().import(prefix, src)
    }
}

/// Additional learned component updated once per learner step.
pub trait Extension {
    fn on_batch(&mut self, batch: &Batch) -> Result<LossReport>;

    fn export(&self, out: &mut ParamMap);

    fn import(&mut self, src: &ParamMap) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OffPolicySettings {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub policy_delay: u64,
    pub tau: f64,
    pub buffer_capacity: usize,
}

/// Replay-based actor-critic agent. The learner step is fixed; algorithms
/// differ only in the actor, the critic and any extensions.
pub struct ActorCritic<A, C> {
    algo: AlgoId,
    pub actor: A,
    pub critic: C,
    pub extensions: Vec<Box<dyn Extension>>,
    settings: OffPolicySettings,
    buffer: ReplayBuffer,
    rng: Rng,
    steps: u64,
    updates: u64,
}

impl<A: Actor, C: Critic> ActorCritic<A, C> {
    pub fn new(algo: AlgoId, actor: A, critic: C, settings: OffPolicySettings, rng: Rng) -> Self {
        Self {
            algo,
            actor,
            critic,
            extensions: Vec::new(),
            buffer: ReplayBuffer::new(settings.buffer_capacity),
            settings,
            rng,
            steps: 0,
            updates: 0,
        }
    }

    pub fn with_extension(mut self, ext: Box<dyn Extension>) -> Self {
        self.extensions.push(ext);
        self
    }

    pub fn settings(&self) -> &OffPolicySettings {
        &self.settings
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// One learner step on a given batch.
    pub fn learn_on(&mut self, batch: &Batch) -> Result<LossReport> {
        let ctx = self.actor.target_context(&batch.next_states, &mut self.rng)?;
        let loss_critic = self.critic.update(batch, &ctx)?;
        self.updates += 1;
        let mut report = LossReport::new();
        if self.updates % self.settings.policy_delay == 0 {
            report = self
                .actor
                .update(&batch.states, self.critic.ensemble(), &mut self.rng)?;
            self.actor.update_target(self.settings.tau)?;
            self.critic.ensemble_mut().polyak(self.settings.tau)?;
        }
        report.insert("loss_critic".into(), loss_critic);
        for ext in &mut self.extensions {
            report.extend(ext.on_batch(batch)?);
        }
        Ok(report)
    }
}

impl<A: Actor, C: Critic> Agent for ActorCritic<A, C> {
    fn algo(&self) -> AlgoId {
        self.algo
    }

    fn act(&mut self, state: &[f64], mode: ActMode) -> Result<Action> {
        check_state_dim(state, self.settings.obs_dim)?;
        if mode == ActMode::Stochastic && self.steps < self.settings.warmup_steps {
            let a = (0..self.settings.action_dim)
                .map(|_| self.rng.uniform(-1.0, 1.0))
                .collect();
            return Ok(Action::Continuous(a));
        }
        let s = Tensor::matrix(1, state.len(), state.to_vec())?;
        let a = self.actor.act(&s, mode, &mut self.rng)?;
        Ok(Action::Continuous(a.into_data()))
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        if transition.action.is_discrete() {
            return Err(Error::InvalidAction(
                "continuous-control agent got a discrete action".into(),
            ));
        }
        self.buffer.push(transition)?;
        self.steps += 1;
        Ok(())
    }

    fn learn(&mut self) -> Result<Option<LossReport>> {
        if self.steps < self.settings.warmup_steps || self.buffer.is_empty() {
            return Ok(None);
        }
        let batch = self.buffer.sample(self.settings.batch_size, &mut self.rng)?;
        self.learn_on(&batch).map(Some)
    }

    fn export_params(&self) -> ParamMap {
        let mut out = ParamMap::new();
        self.actor.export("actor", &mut out);
        self.critic.export("critic", &mut out);
        for ext in &self.extensions {
            ext.export(&mut out);
        }
        export_counter("agent.steps", self.steps, &mut out);
        export_counter("agent.updates", self.updates, &mut out);
        out
    }

    fn import_params(&mut self, params: &ParamMap) -> Result<()> {
        self.actor.import("actor", params)?;
        self.critic.import("critic", params)?;
        for ext in &mut self.extensions {
            ext.import(params)?;
        }
        self.steps = import_counter("agent.steps", params)?;
        self.updates = import_counter("agent.updates", params)?;
        Ok(())
    }
}
