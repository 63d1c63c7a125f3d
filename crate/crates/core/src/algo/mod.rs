//! Concrete algorithms and the factory that assembles them from a config.

pub mod ddpg;
pub mod dqn;
pub mod drnd;
pub mod ppo;
pub mod sac;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{ActorCritic, Agent, CriticEnsemble, OffPolicySettings, Reduce};
use crate::config::ConfigTree;
use crate::env::Space;
use crate::error::{Error, Result};
use crate::nets::{Head, Mlp, MlpSpec};
use crate::rng::Rng;
use crate::tensor::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoId {
    Dqn,
    Ddpg,
    Td3,
    Sac,
    Ppo,
    Drnd,
}

impl AlgoId {
    pub const ALL: [AlgoId; 6] = [
        AlgoId::Dqn,
        AlgoId::Ddpg,
        AlgoId::Td3,
        AlgoId::Sac,
        AlgoId::Ppo,
        AlgoId::Drnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgoId::Dqn => "dqn",
            AlgoId::Ddpg => "ddpg",
            AlgoId::Td3 => "td3",
            AlgoId::Sac => "sac",
            AlgoId::Ppo => "ppo",
            AlgoId::Drnd => "drnd",
        }
    }
}

impl fmt::Display for AlgoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgoId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgoId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownAlgo(s.to_string()))
    }
}

/// Sub-seeds derived from the root seed of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub env: u64,
    pub nets: u64,
    pub sampling: u64,
    pub eval: u64,
    pub extra: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Self {
            env: root,
            nets: root.wrapping_add(1),
            sampling: root.wrapping_add(2),
            eval: root.wrapping_add(3),
            extra: root.wrapping_add(4),
        }
    }
}

fn box_dim(space: &Space, role: &str, algo: AlgoId) -> Result<usize> {
    match space {
        Space::Box { .. } => Ok(space.dim()),
        Space::Discrete(_) => Err(Error::Incompatible {
            algo: algo.to_string(),
            env: String::new(),
            reason: format!("{role} space must be continuous"),
        }),
    }
}

/// Builds the agent described by `config` for the given spaces.
pub fn build_agent(config: &ConfigTree, obs: &Space, act: &Space) -> Result<Box<dyn Agent>> {
    config.validate()?;
    let algo_id = config.experiment.algo_id;
    let a = &config.algo;
    let seeds = Seeds::from_root(config.experiment.seed);
    let mut net_rng = Rng::seed_from(seeds.nets);
    let sample_rng = Rng::seed_from(seeds.sampling);
    let hidden = &config.nets.hidden;
    let activation = config.nets.activation;
    let obs_dim = box_dim(obs, "observation", algo_id)?;

    if algo_id == AlgoId::Dqn {
        let Space::Discrete(n) = *act else {
            return Err(Error::Incompatible {
                algo: algo_id.to_string(),
                env: String::new(),
                reason: "action space must be discrete".into(),
            });
        };
        let q = Mlp::init(
            MlpSpec::new(obs_dim, hidden, n, activation, Head::QValue),
            &mut net_rng,
        )?;
        let settings = dqn::DqnSettings::from_config(a, obs_dim, n);
        return Ok(Box::new(dqn::Dqn::new(settings, q, sample_rng)));
    }
    if algo_id == AlgoId::Ppo {
        let settings = ppo::PpoSettings::from_config(a, obs_dim, act)?;
        let agent = ppo::Ppo::init(settings, hidden, activation, &mut net_rng, sample_rng)?;
        return Ok(Box::new(agent));
    }

    let act_dim = box_dim(act, "action", algo_id)?;
    let settings = OffPolicySettings {
        obs_dim,
        action_dim: act_dim,
        batch_size: a.batch_size,
        warmup_steps: a.warmup_steps,
        policy_delay: a.policy_delay,
        tau: a.tau,
        buffer_capacity: a.buffer_capacity,
    };
    let critic_spec = MlpSpec::new(obs_dim + act_dim, hidden, 1, activation, Head::QValue);
    let critic_adam = AdamConfig::with_lr(a.lr_critic);
    match algo_id {
        AlgoId::Ddpg | AlgoId::Td3 => {
            let net = Mlp::init(
                MlpSpec::new(obs_dim, hidden, act_dim, activation, Head::DeterministicBounded),
                &mut net_rng,
            )?;
            let ens =
                CriticEnsemble::new(critic_spec, a.n_critics, Reduce::Min, critic_adam, &mut net_rng)?;
            let noise = if algo_id == AlgoId::Td3 {
                (a.target_noise, a.target_noise_clip)
            } else {
                (0.0, 0.0)
            };
            let actor = ddpg::DeterministicActor::new(
                net,
                AdamConfig::with_lr(a.lr_actor),
                a.exploration_noise,
                noise.0,
                noise.1,
            );
            let critic = ddpg::QCritic::new(ens, a.gamma);
            Ok(Box::new(ActorCritic::new(algo_id, actor, critic, settings, sample_rng)))
        }
        AlgoId::Sac | AlgoId::Drnd => {
            let net = Mlp::init(
                MlpSpec::new(obs_dim, hidden, act_dim, activation, Head::Gaussian),
                &mut net_rng,
            )?;
            let ens =
                CriticEnsemble::new(critic_spec, a.n_critics, Reduce::Min, critic_adam, &mut net_rng)?;
            let actor = sac::SacActor::new(
                net,
                AdamConfig::with_lr(a.lr_actor),
                AdamConfig::with_lr(a.lr_alpha),
                a.init_alpha,
            )?;
            let critic = sac::SacCritic::new(ens, a.gamma);
            if algo_id == AlgoId::Sac {
                return Ok(Box::new(ActorCritic::new(algo_id, actor, critic, settings, sample_rng)));
            }
            let mut bonus_rng = Rng::seed_from(seeds.extra);
            let bonus = drnd::DrndBonus::init(
                obs_dim + act_dim,
                hidden,
                a.bonus_feature_dim,
                a.bonus_ensemble_size,
                AdamConfig::with_lr(a.lr_critic),
                &mut bonus_rng,
            )?
            .shared();
            let agent = ActorCritic::new(
                algo_id,
                drnd::DrndActor::new(actor, bonus.clone(), a.lambda_actor),
                drnd::DrndCritic::new(critic, bonus.clone(), a.lambda_critic),
                settings,
                sample_rng,
            )
            .with_extension(Box::new(drnd::PredictorUpdate::new(bonus)));
            Ok(Box::new(agent))
        }
        AlgoId::Dqn | AlgoId::Ppo => unreachable!("handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in AlgoId::ALL {
            assert_eq!(id.as_str().parse::<AlgoId>().unwrap(), id);
            assert_eq!(
                serde_json::to_string(&id).unwrap(),
                format!("\"{}\"", id.as_str())
            );
        }
        assert!(matches!("a2c".parse::<AlgoId>(), Err(Error::UnknownAlgo(_))));
    }

    #[test]
    fn seed_offsets() {
        let s = Seeds::from_root(10);
        assert_eq!((s.env, s.nets, s.sampling, s.eval, s.extra), (10, 11, 12, 13, 14));
    }
}
