use crate::env::Action;
use crate::error::{Error, Result};

/// Generalized advantage estimation over one collected segment.
///
/// `terminated[t]` suppresses bootstrapping from step `t`. A `truncated[t]`
/// before the last step ends the episode inside the segment: nothing after
/// it belongs to the same episode, so neither the value nor the advantage
/// of step `t + 1` is carried back (callers fold the value of the cut-off
/// next state into `rewards[t]`). The last step bootstraps from
/// `bootstrap_value` unless it terminated.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || terminated.len() != n || truncated.len() != n {
        return Err(Error::Length(format!(
            "gae inputs: rewards {n}, values {}, terminated {}, truncated {}",
            values.len(),
            terminated.len(),
            truncated.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    for t in (0..n).rev() {
        let (next_value, next_adv) = if t + 1 == n {
            (bootstrap_value, 0.0)
        } else if truncated[t] {
            (0.0, 0.0)
        } else {
            (values[t + 1], advantages[t + 1])
        };
        let mask = if terminated[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * mask * next_value - values[t];
        advantages[t] = delta + gamma * lam * mask * next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// On-policy storage for one collection phase.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    /// Pre-squash/unclipped action samples the log-probabilities refer to.
    pub raw_actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    advantages: Option<Vec<f64>>,
    returns: Option<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        state: Vec<f64>,
        action: Action,
        raw_action: Vec<f64>,
        reward: f64,
        value: f64,
        log_prob: f64,
        terminated: bool,
        truncated: bool,
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.raw_actions.push(raw_action);
        self.rewards.push(reward);
        self.values.push(value);
        self.log_probs.push(log_prob);
        self.terminated.push(terminated);
        self.truncated.push(truncated);
        self.advantages = None;
        self.returns = None;
    }

    pub fn finalize(&mut self, bootstrap_value: f64, gamma: f64, lam: f64) -> Result<()> {
        let (adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.terminated,
            &self.truncated,
            bootstrap_value,
            gamma,
            lam,
        )?;
        self.advantages = Some(adv);
        self.returns = Some(ret);
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.advantages.is_some()
    }

    pub fn advantages(&self) -> Result<&[f64]> {
        self.advantages.as_deref().ok_or(Error::RolloutNotFinalized)
    }

    pub fn returns(&self) -> Result<&[f64]> {
        self.returns.as_deref().ok_or(Error::RolloutNotFinalized)
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}
