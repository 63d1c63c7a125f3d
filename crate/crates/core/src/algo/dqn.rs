//! Deep Q-learning with an ε-greedy behavior policy and a hard-copied
//! target network.

use crate::agent::{
    check_state_dim, export_adam, export_counter, export_tensors, import_adam, import_counter,
    import_tensors, ActMode, Agent, LossReport, ParamMap,
};
use crate::algo::AlgoId;
use crate::buffer::{Batch, ReplayBuffer, Transition};
use crate::config::AlgoConfig;
use crate::env::Action;
use crate::error::{Error, Result};
use crate::nets::Mlp;
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DqnSettings {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// In learner updates.
    pub target_update_interval: u64,
}

impl DqnSettings {
    pub fn from_config(a: &AlgoConfig, obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            gamma: a.gamma,
            lr: a.lr_critic,
            batch_size: a.batch_size,
            warmup_steps: a.warmup_steps,
            buffer_capacity: a.buffer_capacity,
            eps_start: a.eps_start,
            eps_end: a.eps_end,
            eps_decay_steps: a.eps_decay_steps,
            target_update_interval: a.target_update_interval,
        }
    }
}

/// Linearly annealed exploration rate after `steps` environment steps.
pub fn epsilon_at(s: &DqnSettings, steps: u64) -> f64 {
    if s.eps_decay_steps == 0 {
        return s.eps_end;
    }
    let frac = (steps as f64 / s.eps_decay_steps as f64).min(1.0);
    s.eps_start + frac * (s.eps_end - s.eps_start)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct Dqn {
    settings: DqnSettings,
    q: Mlp,
    target: Mlp,
    optimizer: Adam,
    buffer: ReplayBuffer,
    rng: Rng,
    steps: u64,
    updates: u64,
}

impl Dqn {
    pub fn new(settings: DqnSettings, q: Mlp, rng: Rng) -> Self {
        Self {
            optimizer: Adam::new(AdamConfig::with_lr(settings.lr), q.params()),
            target: q.clone(),
            q,
            buffer: ReplayBuffer::new(settings.buffer_capacity),
            settings,
            rng,
            steps: 0,
            updates: 0,
        }
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.settings, self.steps)
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `y = r + γ·(1 − terminated)·max_a′ Q_target(s′, a′)`.
    pub fn td_targets(&self, batch: &Batch) -> Result<Tensor> {
        let next = self.target.predict(&batch.next_states)?;
        let y = (0..batch.len())
            .map(|i| {
                let r = batch.rewards.data()[i];
                if batch.terminated.data()[i] == 1.0 {
                    r
                } else {
                    let row = next.row(i);
                    r + self.settings.gamma * row[argmax(row)]
                }
            })
            .collect();
        Ok(Tensor::column(y))
    }

    /// Mean squared TD error with the online parameters as `vars`.
    pub fn loss_graph(&self, g: &mut Graph, vars: &[Var], batch: &Batch, y: &Tensor) -> Result<Var> {
        let n = self.settings.n_actions;
        let mut mask = vec![0.0; batch.len() * n];
        for (i, a) in batch.action_indices().into_iter().enumerate() {
            if a >= n {
                return Err(Error::InvalidAction(format!("action {a} outside 0..{n}")));
            }
            mask[i * n + a] = 1.0;
        }
        let x = g.constant(batch.states.clone())?;
        let q_all = self.q.forward_with(g, vars, x)?;
        let mask = g.constant(Tensor::matrix(batch.len(), n, mask)?)?;
        let picked = g.mul(q_all, mask)?;
        let q = g.sum(picked, Axis::Cols)?;
        let y = g.constant(y.clone())?;
        let diff = g.sub(q, y)?;
        let sq = g.square(diff)?;
        g.mean(sq, Axis::All)
    }

    pub fn learn_on(&mut self, batch: &Batch) -> Result<LossReport> {
        let y = self.td_targets(batch)?;
        let mut g = Graph::new();
        let vars = self.q.register(&mut g)?;
        let loss = self.loss_graph(&mut g, &vars, batch, &y)?;
        let value = g.value(loss).item();
        let grads = g.backward(loss)?;
        self.optimizer
            .step(self.q.params_mut(), &grads.collect(&vars))?;
        self.updates += 1;
        if self.updates % self.settings.target_update_interval.max(1) == 0 {
            self.target = self.q.clone();
        }
        Ok(LossReport::from([
            ("loss_critic".to_string(), value),
            ("epsilon".to_string(), self.epsilon()),
        ]))
    }
}

impl Agent for Dqn {
    fn algo(&self) -> AlgoId {
        AlgoId::Dqn
    }

    fn act(&mut self, state: &[f64], mode: ActMode) -> Result<Action> {
        check_state_dim(state, self.settings.obs_dim)?;
        let n = self.settings.n_actions;
        if mode == ActMode::Stochastic {
            if self.steps < self.settings.warmup_steps {
                return Ok(Action::Discrete(self.rng.below(n)));
            }
            if self.rng.uniform(0.0, 1.0) < self.epsilon() {
                return Ok(Action::Discrete(self.rng.below(n)));
            }
        }
        let q = self.q.predict(&Tensor::matrix(1, state.len(), state.to_vec())?)?;
        Ok(Action::Discrete(argmax(q.data())))
    }

    fn observe(&mut self, transition: Transition) -> Result<()> {
        if !transition.action.is_discrete() {
            return Err(Error::InvalidAction("DQN needs discrete actions".into()));
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
        export_tensors("q", self.q.params(), &mut out);
        export_tensors("q_target", self.target.params(), &mut out);
        export_adam("q.adam", &self.optimizer, &mut out);
        export_counter("agent.steps", self.steps, &mut out);
        export_counter("agent.updates", self.updates, &mut out);
        out
    }

    fn import_params(&mut self, params: &ParamMap) -> Result<()> {
        import_tensors("q", self.q.params_mut(), params)?;
        import_tensors("q_target", self.target.params_mut(), params)?;
        import_adam("q.adam", &mut self.optimizer, params)?;
        self.steps = import_counter("agent.steps", params)?;
        self.updates = import_counter("agent.updates", params)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Activation, Head, MlpSpec};

    fn settings() -> DqnSettings {
        DqnSettings {
            obs_dim: 1,
            n_actions: 2,
            gamma: 0.9,
            lr: 1e-3,
            batch_size: 1,
            warmup_steps: 0,
            buffer_capacity: 10,
            eps_start: 1.0,
            eps_end: 0.0,
            eps_decay_steps: 10,
            target_update_interval: 1000,
        }
    }

    // Q(s) = s·[w0, w1] + [b0, b1]
    fn linear_q(w: [f64; 2], b: [f64; 2]) -> Mlp {
        let spec = MlpSpec::new(1, &[], 2, Activation::Relu, Head::QValue);
        Mlp::from_params(
            spec,
            vec![Tensor::matrix(1, 2, w.to_vec()).unwrap(), Tensor::vector(b.to_vec())],
        )
        .unwrap()
    }

    fn one(s: f64, a: usize, r: f64, s2: f64, done: bool) -> Batch {
        let t = Transition {
            state: vec![s],
            action: Action::Discrete(a),
            reward: r,
            next_state: vec![s2],
            terminated: done,
            truncated: false,
        };
        Batch::from_transitions(&[&t]).unwrap()
    }

    #[test]
    fn single_transition_loss_by_hand() {
        let agent = Dqn::new(settings(), linear_q([0.5, -1.0], [0.1, 0.2]), Rng::seed_from(0));
        let batch = one(2.0, 1, 1.0, 3.0, false);
        // Q_target(3) = [1.6, -2.8] → max 1.6; y = 1 + 0.9·1.6 = 2.44
        let y = agent.td_targets(&batch).unwrap();
        assert!((y.item() - 2.44).abs() < 1e-12);
        // Q(2, a=1) = -2 + 0.2 = -1.8; loss = (−1.8 − 2.44)² = 17.9776
        let mut g = Graph::new();
        let vars = agent.q_net().register(&mut g).unwrap();
        let loss = agent.loss_graph(&mut g, &vars, &batch, &y).unwrap();
        assert!((g.value(loss).item() - 17.9776).abs() < 1e-10);
    }

    #[test]
    fn terminated_target_is_reward() {
        let agent = Dqn::new(settings(), linear_q([3.0, 7.0], [1.0, 1.0]), Rng::seed_from(0));
        let y = agent.td_targets(&one(0.3, 0, -0.25, 5.0, true)).unwrap();
        assert_eq!(y.item(), -0.25);
    }

    #[test]
    fn epsilon_schedule_is_linear() {
        let s = settings();
        assert_eq!(epsilon_at(&s, 0), 1.0);
        assert!((epsilon_at(&s, 5) - 0.5).abs() < 1e-15);
        assert_eq!(epsilon_at(&s, 50), 0.0);
    }

    #[test]
    fn greedy_when_epsilon_is_zero() {
        let mut s = settings();
        s.eps_start = 0.0;
        let mut agent = Dqn::new(s, linear_q([0.5, -1.0], [0.0, 0.0]), Rng::seed_from(3));
        for _ in 0..20 {
            assert_eq!(agent.act(&[1.0], ActMode::Stochastic).unwrap(), Action::Discrete(0));
            assert_eq!(agent.act(&[-1.0], ActMode::Stochastic).unwrap(), Action::Discrete(1));
        }
    }

    #[test]
    fn uniform_when_epsilon_is_one() {
        let mut s = settings();
        s.n_actions = 4;
        s.eps_end = 1.0;
        let spec = MlpSpec::new(1, &[], 4, Activation::Relu, Head::QValue);
        let q = Mlp::init(spec, &mut Rng::seed_from(1)).unwrap();
        let mut agent = Dqn::new(s, q, Rng::seed_from(5));
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let Action::Discrete(a) = agent.act(&[0.2], ActMode::Stochastic).unwrap() else {
                unreachable!()
            };
            counts[a] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of χ² with 3 degrees of freedom
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn hard_copy_on_interval() {
        let mut s = settings();
        s.target_update_interval = 2;
        let mut agent = Dqn::new(s, linear_q([0.5, -1.0], [0.1, 0.2]), Rng::seed_from(0));
        let batch = one(1.0, 0, 1.0, 1.0, false);
        agent.learn_on(&batch).unwrap();
        assert_ne!(agent.q_net(), agent.target_net());
        agent.learn_on(&batch).unwrap();
        assert_eq!(agent.q_net(), agent.target_net());
    }
}
