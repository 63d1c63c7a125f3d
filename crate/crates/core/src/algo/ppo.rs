//! Proximal policy optimization with a clipped surrogate, GAE and a
//! separate value network.

use crate::agent::{
    check_state_dim, export_adam, export_counter, export_tensors, import_adam, import_counter,
    import_tensors, lookup, ActMode, Agent, LossReport, ParamMap,
};
use crate::algo::dqn::argmax;
use crate::algo::AlgoId;
use crate::buffer::{RolloutBuffer, Transition};
use crate::config::AlgoConfig;
use crate::env::{Action, Space};
use crate::error::{Error, Result};
use crate::nets::{Activation, Head, Mlp, MlpSpec, LOG_STD_MAX, LOG_STD_MIN, POLICY_INIT_SCALE};
use crate::rng::Rng;
use crate::tensor::{Adam, AdamConfig, Axis, Graph, Tensor, Var};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Categorical { n: usize },
    /// Unsquashed Gaussian with a state-independent log-std; actions are
    /// clipped to `[-1, 1]` before reaching the environment.
    Gaussian { dim: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoSettings {
    pub obs_dim: usize,
    pub kind: PolicyKind,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ent_coef: f64,
    pub rollout_len: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
}

impl PpoSettings {
    pub fn from_config(a: &AlgoConfig, obs_dim: usize, act: &Space) -> Result<Self> {
        let kind = match act {
            Space::Discrete(n) => PolicyKind::Categorical { n: *n },
            Space::Box { .. } => PolicyKind::Gaussian { dim: act.dim() },
        };
        Ok(Self {
            obs_dim,
            kind,
            gamma: a.gamma,
            gae_lambda: a.gae_lambda,
            clip_ratio: a.clip_ratio,
            epochs: a.epochs,
            minibatches: a.minibatches,
            ent_coef: a.ent_coef,
            rollout_len: a.rollout_len,
            lr_actor: a.lr_actor,
            lr_critic: a.lr_critic,
        })
    }
}

/// `−mean min(ρ·Â, clip(ρ, 1 − ε, 1 + ε)·Â)` with `ρ = exp(log π_new − log π_old)`.
pub fn ppo_policy_loss(
    g: &mut Graph,
    log_prob_new: Var,
    log_prob_old: &[f64],
    advantages: &[f64],
    clip_ratio: f64,
) -> Result<Var> {
    let old = g.constant(Tensor::column(log_prob_old.to_vec()))?;
    let adv = g.constant(Tensor::column(advantages.to_vec()))?;
    let log_ratio = g.sub(log_prob_new, old)?;
    let ratio = g.exp(log_ratio)?;
    let surrogate = g.mul(ratio, adv)?;
    let clipped_ratio = g.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)?;
    let clipped = g.mul(clipped_ratio, adv)?;
    let m = g.minimum(surrogate, clipped)?;
    let mean = g.mean(m, Axis::All)?;
    g.neg(mean)
}

/// Shifts and scales to mean 0, population std 1.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    values.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}

#[derive(Clone, Debug)]
struct Pending {
    raw_action: Vec<f64>,
    log_prob: f64,
    value: f64,
}

#[derive(Clone, Debug)]
pub struct Ppo {
    settings: PpoSettings,
    policy: Mlp,
    /// Empty for categorical policies.
    log_std: Tensor,
    value: Mlp,
    policy_optimizer: Adam,
    value_optimizer: Adam,
    rollout: RolloutBuffer,
    last_next_state: Vec<f64>,
    pending: Option<Pending>,
    rng: Rng,
    steps: u64,
    updates: u64,
}

impl Ppo {
    pub fn init(
        settings: PpoSettings,
        hidden: &[usize],
        activation: Activation,
        net_rng: &mut Rng,
        rng: Rng,
    ) -> Result<Self> {
        let out = match settings.kind {
            PolicyKind::Categorical { n } => n,
            PolicyKind::Gaussian { dim } => dim,
        };
        let mut policy = Mlp::init(
            MlpSpec::new(settings.obs_dim, hidden, out, activation, Head::Plain),
            net_rng,
        )?;
        let last = policy.params().len() - 2;
        for w in policy.params_mut()[last].data_mut() {
            *w *= POLICY_INIT_SCALE;
        }
        let value = Mlp::init(
            MlpSpec::new(settings.obs_dim, hidden, 1, activation, Head::Plain),
            net_rng,
        )?;
        Self::from_parts(settings, policy, value, rng)
    }

    pub fn from_parts(settings: PpoSettings, policy: Mlp, value: Mlp, rng: Rng) -> Result<Self> {
        let log_std = match settings.kind {
            PolicyKind::Categorical { .. } => Tensor::vector(vec![]),
            PolicyKind::Gaussian { dim } => Tensor::vector(vec![0.0; dim]),
        };
        let mut agent = Self {
            policy_optimizer: Adam::new(AdamConfig::default(), &[]),
            value_optimizer: Adam::new(AdamConfig::with_lr(settings.lr_critic), value.params()),
            settings,
            policy,
            log_std,
            value,
            rollout: RolloutBuffer::new(),
            last_next_state: Vec::new(),
            pending: None,
            rng,
            steps: 0,
            updates: 0,
        };
        agent.policy_optimizer =
            Adam::new(AdamConfig::with_lr(settings.lr_actor), &agent.policy_params());
        Ok(agent)
    }

    pub fn settings(&self) -> &PpoSettings {
        &self.settings
    }

    pub fn rollout(&self) -> &RolloutBuffer {
        &self.rollout
    }

    fn policy_params(&self) -> Vec<Tensor> {
        let mut p = self.policy.params().to_vec();
        if !self.log_std.is_empty() {
            p.push(self.log_std.clone());
        }
        p
    }

    fn set_policy_params(&mut self, mut params: Vec<Tensor>) {
        if !self.log_std.is_empty() {
            self.log_std = params.pop().expect("log-std slot");
        }
        for (slot, p) in self.policy.params_mut().iter_mut().zip(params) {
            *slot = p;
        }
    }

    /// Registers the policy parameters (network then log-std) in `g`.
    pub fn register_policy(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.policy_params().iter().map(|p| g.param(p)).collect()
    }

    /// `n×1` log-probabilities of `raw_actions` and the mean entropy.
    pub fn log_prob_graph(
        &self,
        g: &mut Graph,
        vars: &[Var],
        states: &Tensor,
        raw_actions: &Tensor,
    ) -> Result<(Var, Var)> {
        let n_net = self.policy.params().len();
        let s = g.constant(states.clone())?;
        let out = self.policy.forward_with(g, &vars[..n_net], s)?;
        match self.settings.kind {
            PolicyKind::Categorical { n } => {
                let rows = states.rows();
                let mut mask = vec![0.0; rows * n];
                for (i, &a) in raw_actions.data().iter().enumerate() {
                    let a = a as usize;
                    if a >= n {
                        return Err(Error::InvalidAction(format!("action {a} outside 0..{n}")));
                    }
                    mask[i * n + a] = 1.0;
                }
                let logp_all = g.log_softmax(out)?;
                let mask = g.constant(Tensor::matrix(rows, n, mask)?)?;
                let picked = g.mul(logp_all, mask)?;
                let logp = g.sum(picked, Axis::Cols)?;
                let p = g.exp(logp_all)?;
                let plogp = g.mul(p, logp_all)?;
                let row_sum = g.sum(plogp, Axis::Cols)?;
                let mean = g.mean(row_sum, Axis::All)?;
                let entropy = g.neg(mean)?;
                Ok((logp, entropy))
            }
            PolicyKind::Gaussian { .. } => {
                let log_std = g.clamp(vars[n_net], LOG_STD_MIN, LOG_STD_MAX)?;
                let raw = g.constant(raw_actions.clone())?;
                let diff = g.sub(raw, out)?;
                let neg_log_std = g.neg(log_std)?;
                let inv_std = g.exp(neg_log_std)?;
                let z = g.mul(diff, inv_std)?;
                let z2 = g.square(z)?;
                let half = g.scale(z2, -0.5)?;
                let shifted = g.add_scalar(half, -HALF_LN_2PI)?;
                let per_dim = g.sub(shifted, log_std)?;
                let logp = g.sum(per_dim, Axis::Cols)?;
                let ent_per_dim = g.add_scalar(log_std, HALF_LN_2PI + 0.5)?;
                let entropy = g.sum(ent_per_dim, Axis::All)?;
                Ok((logp, entropy))
            }
        }
    }

    fn value_of(&self, state: &[f64]) -> Result<f64> {
        let v = self
            .value
            .predict(&Tensor::matrix(1, state.len(), state.to_vec())?)?;
        Ok(v.item())
    }

    /// All epochs of clipped-surrogate and value regression over the
    /// finalized rollout.
    pub fn update_from_rollout(&mut self) -> Result<LossReport> {
        let adv_all = self.rollout.advantages()?.to_vec();
        let ret_all = self.rollout.returns()?.to_vec();
        let n = self.rollout.len();
        let states = Tensor::from_rows(&self.rollout.states)?;
        let raw = Tensor::from_rows(&self.rollout.raw_actions)?;
        let mb = n.div_ceil(self.settings.minibatches.max(1)).max(1);
        let (mut sum_pi, mut sum_v, mut sum_ent, mut count) = (0.0, 0.0, 0.0, 0usize);
        let mut idx: Vec<usize> = (0..n).collect();
        for _ in 0..self.settings.epochs {
            self.rng.shuffle(&mut idx);
            for chunk in idx.chunks(mb) {
                let s = states.select_rows(chunk);
                let a = raw.select_rows(chunk);
                let old: Vec<f64> = chunk.iter().map(|&i| self.rollout.log_probs[i]).collect();
                let adv = normalize(&chunk.iter().map(|&i| adv_all[i]).collect::<Vec<_>>());

                let mut g = Graph::new();
                let vars = self.register_policy(&mut g)?;
                let (logp, entropy) = self.log_prob_graph(&mut g, &vars, &s, &a)?;
                let pi_loss = ppo_policy_loss(&mut g, logp, &old, &adv, self.settings.clip_ratio)?;
                let bonus = g.scale(entropy, self.settings.ent_coef)?;
                let total = g.sub(pi_loss, bonus)?;
                sum_pi += g.value(pi_loss).item();
                sum_ent += g.value(entropy).item();
                let grads = g.backward(total)?;
                let mut params = self.policy_params();
                self.policy_optimizer.step(&mut params, &grads.collect(&vars))?;
                self.set_policy_params(params);

                let mut g = Graph::new();
                let x = g.constant(s)?;
                let (v, vvars) = self.value.forward(&mut g, x)?;
                let target = g.constant(Tensor::column(chunk.iter().map(|&i| ret_all[i]).collect()))?;
                let diff = g.sub(v, target)?;
                let sq = g.square(diff)?;
                let v_loss = g.mean(sq, Axis::All)?;
                sum_v += g.value(v_loss).item();
                let grads = g.backward(v_loss)?;
                self.value_optimizer
                    .step(self.value.params_mut(), &grads.collect(&vvars))?;
                count += 1;
            }
        }
        let c = count.max(1) as f64;
        Ok(LossReport::from([
            ("loss_actor".to_string(), sum_pi / c),
            ("loss_critic".to_string(), sum_v / c),
            ("entropy".to_string(), sum_ent / c),
        ]))
    }
}

impl Agent for Ppo {
    fn algo(&self) -> AlgoId {
        AlgoId::Ppo
    }

    fn act(&mut self, state: &[f64], mode: ActMode) -> Result<Action> {
        check_state_dim(state, self.settings.obs_dim)?;
        let s = Tensor::matrix(1, state.len(), state.to_vec())?;
        let out = self.policy.predict(&s)?;
        match (self.settings.kind, mode) {
            (PolicyKind::Categorical { .. }, ActMode::Deterministic) => {
                Ok(Action::Discrete(argmax(out.data())))
            }
            (PolicyKind::Gaussian { .. }, ActMode::Deterministic) => Ok(Action::Continuous(
                out.data().iter().map(|m| m.clamp(-1.0, 1.0)).collect(),
            )),
            (PolicyKind::Categorical { .. }, ActMode::Stochastic) => {
                let max = out.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + out.data().iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                let logp: Vec<f64> = out.data().iter().map(|l| l - lse).collect();
                let u = self.rng.uniform(0.0, 1.0);
                let mut acc = 0.0;
                let mut a = logp.len() - 1;
                for (i, lp) in logp.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        a = i;
                        break;
                    }
                }
                self.pending = Some(Pending {
                    raw_action: vec![a as f64],
                    log_prob: logp[a],
                    value: self.value_of(state)?,
                });
                Ok(Action::Discrete(a))
            }
            (PolicyKind::Gaussian { .. }, ActMode::Stochastic) => {
                let mut raw = Vec::with_capacity(out.len());
                let mut log_prob = 0.0;
                for (m, &ls) in out.data().iter().zip(self.log_std.data()) {
                    let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let e = self.rng.normal();
                    raw.push(m + ls.exp() * e);
                    log_prob += -0.5 * e * e - HALF_LN_2PI - ls;
                }
                let action = raw.iter().map(|r| r.clamp(-1.0, 1.0)).collect();
                self.pending = Some(Pending {
                    raw_action: raw,
                    log_prob,
                    value: self.value_of(state)?,
                });
                Ok(Action::Continuous(action))
            }
        }
    }

    fn observe(&mut self, t: Transition) -> Result<()> {
        let p = self
            .pending
            .take()
            .ok_or(Error::MissingContext("a stochastic act before observe"))?;
        let mut reward = t.reward;
        let last = self.rollout.len() + 1 >= self.settings.rollout_len;
        if t.truncated && !t.terminated && !last {
            reward += self.settings.gamma * self.value_of(&t.next_state)?;
        }
        self.last_next_state = t.next_state;
        self.rollout.push(
            t.state,
            t.action,
            p.raw_action,
            reward,
            p.value,
            p.log_prob,
            t.terminated,
            t.truncated,
        );
        self.steps += 1;
        Ok(())
    }

    fn learn(&mut self) -> Result<Option<LossReport>> {
        if self.rollout.len() < self.settings.rollout_len {
            return Ok(None);
        }
        let bootstrap = self.value_of(&self.last_next_state)?;
        self.rollout
            .finalize(bootstrap, self.settings.gamma, self.settings.gae_lambda)?;
        let report = self.update_from_rollout()?;
        self.rollout.clear();
        self.updates += 1;
        Ok(Some(report))
    }

    fn export_params(&self) -> ParamMap {
        let mut out = ParamMap::new();
        export_tensors("policy.net", self.policy.params(), &mut out);
        out.insert("policy.log_std".into(), self.log_std.clone());
        export_tensors("value.net", self.value.params(), &mut out);
        export_adam("policy.adam", &self.policy_optimizer, &mut out);
        export_adam("value.adam", &self.value_optimizer, &mut out);
        export_counter("agent.steps", self.steps, &mut out);
        export_counter("agent.updates", self.updates, &mut out);
        out
    }

    fn import_params(&mut self, params: &ParamMap) -> Result<()> {
        import_tensors("policy.net", self.policy.params_mut(), params)?;
        let ls = lookup(params, "policy.log_std")?;
        if ls.shape() != self.log_std.shape() {
            return Err(Error::Param("policy.log_std".into()));
        }
        self.log_std = ls;
        import_tensors("value.net", self.value.params_mut(), params)?;
        import_adam("policy.adam", &mut self.policy_optimizer, params)?;
        import_adam("value.adam", &mut self.value_optimizer, params)?;
        self.steps = import_counter("agent.steps", params)?;
        self.updates = import_counter("agent.updates", params)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_policies_give_minus_mean_advantage() {
        let mut g = Graph::new();
        let lp = g.param(&Tensor::column(vec![-0.3, -1.2, -0.7])).unwrap();
        let adv = [0.5, -1.0, 2.0];
        let loss = ppo_policy_loss(&mut g, lp, &[-0.3, -1.2, -0.7], &adv, 0.2).unwrap();
        assert!((g.value(loss).item() + 0.5).abs() < 1e-15);
        let norm = normalize(&adv);
        let mut g = Graph::new();
        let lp = g.param(&Tensor::column(vec![-0.3, -1.2, -0.7])).unwrap();
        let loss = ppo_policy_loss(&mut g, lp, &[-0.3, -1.2, -0.7], &norm, 0.2).unwrap();
        assert!(g.value(loss).item().abs() < 1e-12);
    }

    #[test]
    fn three_sample_surrogate_by_hand() {
        let p_new = [0.5f64, 0.2, 0.9];
        let p_old = [0.4f64, 0.25, 0.5];
        let adv = [1.0, -2.0, 0.5];
        let eps = 0.2;
        let mut g = Graph::new();
        let lp = g
            .param(&Tensor::column(p_new.iter().map(|p| p.ln()).collect()))
            .unwrap();
        let old: Vec<f64> = p_old.iter().map(|p| p.ln()).collect();
        let loss = ppo_policy_loss(&mut g, lp, &old, &adv, eps).unwrap();
        let brute: f64 = (0..3)
            .map(|i| {
                let r = p_new[i] / p_old[i];
                (r * adv[i]).min(r.clamp(1.0 - eps, 1.0 + eps) * adv[i])
            })
            .sum::<f64>()
            / 3.0;
        assert!((g.value(loss).item() + brute).abs() < 1e-12);
    }

    #[test]
    fn clip_plateau_blocks_gradient() {
        let mut g = Graph::new();
        // ρ = e^0.5 > 1.2 with positive advantage
        let lp = g.param(&Tensor::column(vec![0.5])).unwrap();
        let loss = ppo_policy_loss(&mut g, lp, &[0.0], &[1.0], 0.2).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(lp).unwrap().item(), 0.0);
    }

    #[test]
    fn unbounded_clip_matches_unclipped_gradient() {
        let lp0 = Tensor::column(vec![-0.1, 0.4, -0.9, 0.2]);
        let old = [-0.3, 0.1, -0.2, 0.6];
        let adv = [1.3, -0.4, 0.8, -2.0];
        let mut g = Graph::new();
        let lp = g.param(&lp0).unwrap();
        let loss = ppo_policy_loss(&mut g, lp, &old, &adv, f64::INFINITY).unwrap();
        let grads = g.backward(loss).unwrap();
        // d/dlp −mean(ρ·A) = −ρ·A / n
        for i in 0..4 {
            let rho = (lp0.data()[i] - old[i]).exp();
            let expected = -rho * adv[i] / 4.0;
            let got = grads.get(lp).unwrap().data()[i];
            assert!((got - expected).abs() <= 1e-6 * expected.abs());
        }
    }

    #[test]
    fn rollout_arrays_survive_normalization() {
        let adv = vec![1.0, 2.0, 3.0];
        let copy = adv.clone();
        let n = normalize(&adv);
        assert_eq!(adv, copy);
        assert!(n.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn update_leaves_rollout_untouched() {
        let mut rng = Rng::seed_from(4);
        let settings = PpoSettings {
            obs_dim: 2,
            kind: PolicyKind::Gaussian { dim: 1 },
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs: 3,
            minibatches: 2,
            ent_coef: 0.01,
            rollout_len: 6,
            lr_actor: 1e-2,
            lr_critic: 1e-2,
        };
        let mut agent =
            Ppo::init(settings, &[8], Activation::Tanh, &mut rng, Rng::seed_from(5)).unwrap();
        for i in 0..6 {
            let a = rng.normal();
            agent.rollout.push(
                vec![rng.normal(), rng.normal()],
                Action::Continuous(vec![a.clamp(-1.0, 1.0)]),
                vec![a],
                rng.normal(),
                rng.normal(),
                -1.0 - rng.uniform(0.0, 1.0),
                i == 3,
                false,
            );
        }
        agent.rollout.finalize(0.4, 0.99, 0.95).unwrap();
        let before = agent.rollout.clone();
        let policy_before = agent.policy.clone();
        agent.update_from_rollout().unwrap();
        assert_eq!(agent.rollout.states, before.states);
        assert_eq!(agent.rollout.raw_actions, before.raw_actions);
        assert_eq!(agent.rollout.rewards, before.rewards);
        assert_eq!(agent.rollout.values, before.values);
        assert_eq!(agent.rollout.log_probs, before.log_probs);
        assert_eq!(agent.rollout.advantages().unwrap(), before.advantages().unwrap());
        assert_eq!(agent.rollout.returns().unwrap(), before.returns().unwrap());
        assert_ne!(agent.policy, policy_before);
    }
}
