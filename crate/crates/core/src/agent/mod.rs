//! The agent ontology: a common [`Agent`] surface, the actor-critic
//! skeleton with its overridable actor/critic hooks, and critic ensembles
//! with target networks.

mod actor_critic;
mod ensemble;

use std::collections::BTreeMap;

pub use actor_critic::{
    bellman_backup, Actor, ActorCritic, ActorOutput, Critic, Extension, OffPolicySettings,
    TargetContext,
};
pub use ensemble::{polyak_update, reduce_ensemble, CriticEnsemble, Reduce};

use crate::algo::AlgoId;
use crate::buffer::Transition;
use crate::env::Action;
use crate::error::{Error, Result};
use crate::tensor::{Adam, Tensor};

/// Named scalars produced by one learner update.
pub type LossReport = BTreeMap<String, f64>;

/// Every named array an agent checkpoints.
pub type ParamMap = BTreeMap<String, Tensor>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    /// Evaluation behavior.
    Deterministic,
}

/// What the training loop sees of an agent.
pub trait Agent {
    fn algo(&self) -> AlgoId;

    fn act(&mut self, state: &[f64], mode: ActMode) -> Result<Action>;

    /// Records one environment interaction.
    fn observe(&mut self, transition: Transition) -> Result<()>;

    /// Runs one learner update. `Ok(None)` means not enough data yet.
    fn learn(&mut self) -> Result<Option<LossReport>>;

    fn export_params(&self) -> ParamMap;

    fn import_params(&mut self, params: &ParamMap) -> Result<()>;
}

pub(crate) fn check_state_dim(state: &[f64], expected: usize) -> Result<()> {
    if state.len() != expected {
        return Err(Error::Shape {
            op: "act",
            lhs: vec![state.len()],
            rhs: vec![expected],
        });
    }
    Ok(())
}

pub(crate) fn export_tensors(prefix: &str, tensors: &[Tensor], out: &mut ParamMap) {
    for (i, t) in tensors.iter().enumerate() {
        out.insert(format!("{prefix}.{i}"), t.clone());
    }
}

pub(crate) fn import_tensors(prefix: &str, slots: &mut [Tensor], src: &ParamMap) -> Result<()> {
    for (i, slot) in slots.iter_mut().enumerate() {
        let key = format!("{prefix}.{i}");
        let value = lookup(src, &key)?;
        if value.shape() != slot.shape() {
            return Err(Error::Param(key));
        }
        *slot = value;
    }
    Ok(())
}

pub(crate) fn lookup(src: &ParamMap, key: &str) -> Result<Tensor> {
    src.get(key).cloned().ok_or_else(|| Error::Param(key.to_string()))
}

pub(crate) fn export_adam(prefix: &str, opt: &Adam, out: &mut ParamMap) {
    out.extend(opt.export(prefix));
}

pub(crate) fn import_adam(prefix: &str, opt: &mut Adam, src: &ParamMap) -> Result<()> {
    opt.import(prefix, &mut |k| lookup(src, k))
}

pub(crate) fn export_counter(name: &str, value: u64, out: &mut ParamMap) {
    out.insert(name.to_string(), Tensor::scalar(value as f64));
}

pub(crate) fn import_counter(name: &str, src: &ParamMap) -> Result<u64> {
    let v = lookup(src, name)?.item();
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::Param(name.to_string()));
    }
    Ok(v as u64)
}
