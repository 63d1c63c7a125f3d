//! Layered experiment configuration: per-algorithm defaults, JSON files
//! with nested or dotted keys, and `key=value` overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algo::AlgoId;
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::nets::Activation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigTree {
    pub experiment: ExperimentConfig,
    pub algo: AlgoConfig,
    pub nets: NetsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env_id: EnvId,
    pub algo_id: AlgoId,
    pub seed: u64,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub out_dir: String,
    /// Fill the `wall_s` column of the training log. Off by default so
    /// that logs are reproducible byte for byte.
    pub record_wall_time: bool,
    /// Stop after the first evaluation whose mean return reaches this.
    #[serde(default)]
    pub target_return: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub update_every: u64,
    pub buffer_capacity: usize,
    /// Critic ensemble size.
    pub n_critics: usize,
    /// Initial SAC temperature.
    pub init_alpha: f64,
    /// Std of Gaussian action noise for deterministic actors.
    pub exploration_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    /// Hard target copy interval in learner updates (DQN).
    pub target_update_interval: u64,
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ent_coef: f64,
    pub rollout_len: usize,
    pub lambda_actor: f64,
    pub lambda_critic: f64,
    pub bonus_ensemble_size: usize,
    pub bonus_feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetsConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

/// Dotted-path overrides, e.g. `{"algo.gamma": 0.9}`.
pub type Partial = BTreeMap<String, Value>;

impl AlgoConfig {
    fn base() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 256,
            warmup_steps: 1_000,
            update_every: 1,
            buffer_capacity: 100_000,
            n_critics: 2,
            init_alpha: 1.0,
            exploration_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_update_interval: 1_000,
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            epochs: 10,
            minibatches: 32,
            ent_coef: 0.0,
            rollout_len: 2_048,
            lambda_actor: 1.0,
            lambda_critic: 1.0,
            bonus_ensemble_size: 3,
            bonus_feature_dim: 32,
        }
    }
}

/// Fully populated configuration for an algorithm/environment pair.
pub fn defaults(algo: AlgoId, env: EnvId) -> Result<ConfigTree> {
    check_compatible(algo, env)?;
    let mut algo_cfg = AlgoConfig::base();
    let nets = match algo {
        AlgoId::Dqn => NetsConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
        },
        AlgoId::Ppo => NetsConfig {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        },
        _ => NetsConfig {
            hidden: vec![256, 256],
            activation: Activation::Relu,
        },
    };
    match algo {
        AlgoId::Dqn => algo_cfg.n_critics = 1,
        AlgoId::Ddpg => {
            algo_cfg.n_critics = 1;
            algo_cfg.policy_delay = 1;
        }
        AlgoId::Sac | AlgoId::Drnd => algo_cfg.policy_delay = 1,
        AlgoId::Td3 | AlgoId::Ppo => {}
    }
    Ok(ConfigTree {
        experiment: ExperimentConfig {
            env_id: env,
            algo_id: algo,
            seed: 0,
            total_steps: 100_000,
            eval_every: 2_000,
            eval_episodes: 10,
            out_dir: format!("runs/{algo}-{env}-0"),
            record_wall_time: false,
            target_return: None,
        },
        algo: algo_cfg,
        nets,
    })
}

/// String-keyed variant of [`defaults`].
pub fn defaults_for(algo: &str, env: &str) -> Result<ConfigTree> {
    defaults(algo.parse()?, env.parse()?)
}

pub fn check_compatible(algo: AlgoId, env: EnvId) -> Result<()> {
    let discrete_env = env == EnvId::Cartpole;
    let reason = match algo {
        AlgoId::Dqn if !discrete_env => Some("needs a discrete action space"),
        AlgoId::Ddpg | AlgoId::Td3 | AlgoId::Sac | AlgoId::Drnd if discrete_env => {
            Some("needs a box action space")
        }
        _ => None,
    };
    match reason {
        Some(reason) => Err(Error::Incompatible {
            algo: algo.to_string(),
            env: env.to_string(),
            reason: reason.to_string(),
        }),
        None => Ok(()),
    }
}

impl ConfigTree {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let e = &self.experiment;
        check_compatible(e.algo_id, e.env_id)?;
        if e.eval_every < 1 {
            return bad("experiment.eval_every must be >= 1".into());
        }
        if e.eval_episodes < 1 {
            return bad("experiment.eval_episodes must be >= 1".into());
        }
        if e.target_return.is_some_and(|t| !t.is_finite()) {
            return bad("experiment.target_return must be finite".into());
        }
        let a = &self.algo;
        if !(a.gamma > 0.0 && a.gamma <= 1.0) {
            return bad(format!("algo.gamma must lie in (0, 1], got {}", a.gamma));
        }
        if !(0.0..=1.0).contains(&a.tau) {
            return bad(format!("algo.tau must lie in [0, 1], got {}", a.tau));
        }
        for (name, v) in [
            ("lr_actor", a.lr_actor),
            ("lr_critic", a.lr_critic),
            ("lr_alpha", a.lr_alpha),
            ("init_alpha", a.init_alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("algo.{name} must be positive, got {v}"));
            }
        }
        if !(a.clip_ratio > 0.0 && a.clip_ratio < 1.0) {
            return bad(format!("algo.clip_ratio must lie in (0, 1), got {}", a.clip_ratio));
        }
        if !(0.0..=1.0).contains(&a.gae_lambda) {
            return bad(format!("algo.gae_lambda must lie in [0, 1], got {}", a.gae_lambda));
        }
        for (name, v) in [
            ("batch_size", a.batch_size),
            ("buffer_capacity", a.buffer_capacity),
            ("n_critics", a.n_critics),
            ("epochs", a.epochs),
            ("minibatches", a.minibatches),
            ("rollout_len", a.rollout_len),
            ("bonus_ensemble_size", a.bonus_ensemble_size),
            ("bonus_feature_dim", a.bonus_feature_dim),
        ] {
            if v < 1 {
                return bad(format!("algo.{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("update_every", a.update_every),
            ("policy_delay", a.policy_delay),
            ("target_update_interval", a.target_update_interval),
        ] {
            if v < 1 {
                return bad(format!("algo.{name} must be >= 1"));
            }
        }
        if a.minibatches > a.rollout_len {
            return bad("algo.minibatches exceeds algo.rollout_len".into());
        }
        for (name, v) in [
            ("exploration_noise", a.exploration_noise),
            ("target_noise", a.target_noise),
            ("target_noise_clip", a.target_noise_clip),
            ("ent_coef", a.ent_coef),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("algo.{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&a.eps_end) || !(0.0..=1.0).contains(&a.eps_start) {
            return bad("algo.eps_start and algo.eps_end must lie in [0, 1]".into());
        }
        if e.algo_id == AlgoId::Td3 && a.n_critics < 2 {
            return bad("td3 needs algo.n_critics >= 2".into());
        }
        if self.nets.hidden.contains(&0) {
            return bad("nets.hidden widths must be >= 1".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Partial) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), value.clone());
        }
    }
}

fn known_keys() -> Partial {
    let tree = defaults(AlgoId::Sac, EnvId::Pendulum).expect("registered pair");
    let mut out = Partial::new();
    flatten_into("", &serde_json::to_value(tree).expect("serializable"), &mut out);
    out
}

/// Parses a JSON object of nested and/or dotted keys into a partial,
/// rejecting keys the configuration does not have.
pub fn parse_partial(text: &str) -> Result<Partial> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(map) = value else {
        return Err(Error::Config("config file must hold a JSON object".into()));
    };
    let mut flat = Partial::new();
    for (k, v) in &map {
        flatten_into(k, v, &mut flat);
    }
    let known = known_keys();
    if let Some(unknown) = flat.keys().find(|k| !known.contains_key(*k)) {
        return Err(Error::UnknownKey(unknown.clone()));
    }
    Ok(flat)
}

pub fn load_file(path: impl AsRef<Path>) -> Result<Partial> {
    parse_partial(&std::fs::read_to_string(path)?)
}

/// Parses `key=value`; the value is read as JSON, falling back to a plain
/// string.
pub fn parse_assignment(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{text}`")))?;
    let key = key.trim().to_string();
    if !known_keys().contains_key(&key) {
        return Err(Error::UnknownKey(key));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key, value))
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let Value::Object(map) = node else {
            return Err(Error::UnknownKey(path.to_string()));
        };
        if parts.peek().is_none() {
            if !map.contains_key(part) {
                return Err(Error::UnknownKey(path.to_string()));
            }
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .get_mut(part)
            .ok_or_else(|| Error::UnknownKey(path.to_string()))?;
    }
    Err(Error::UnknownKey(path.to_string()))
}

/// Applies `overrides` in order (later wins) and re-validates.
pub fn merge(base: &ConfigTree, overrides: &[Partial]) -> Result<ConfigTree> {
    let mut root = serde_json::to_value(base)?;
    for partial in overrides {
        for (path, value) in partial {
            set_path(&mut root, path, value.clone())?;
        }
    }
    let tree: ConfigTree = serde_json::from_value(root)
        .map_err(|e| Error::Config(format!("override has the wrong type: {e}")))?;
    tree.validate()?;
    Ok(tree)
}

/// Merges a list of partials into one, later entries winning.
pub fn combine(partials: &[Partial]) -> Partial {
    let mut out = Partial::new();
    for p in partials {
        out.extend(p.iter().map(|(k, v)| (k.clone(), v.clone())));
    }
    out
}
