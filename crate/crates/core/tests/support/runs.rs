//! Small, fast experiment configurations.

use std::path::Path;

use rlkit::algo::AlgoId;
use rlkit::config::{defaults, ConfigTree};
use rlkit::env::EnvId;

pub fn env_for(algo: AlgoId) -> EnvId {
    match algo {
        AlgoId::Dqn | AlgoId::Ppo => EnvId::Cartpole,
        _ => EnvId::Pendulum,
    }
}

/// Narrow nets and short schedules; `steps` environment steps into `dir`.
pub fn tiny(algo: AlgoId, env: EnvId, dir: &Path, steps: u64) -> ConfigTree {
    let mut c = defaults(algo, env).unwrap();
    c.experiment.total_steps = steps;
    c.experiment.eval_every = 100;
    c.experiment.eval_episodes = 2;
    c.experiment.out_dir = dir.to_string_lossy().into_owned();
    c.algo.warmup_steps = 50;
    c.algo.batch_size = 16;
    c.algo.rollout_len = 64;
    c.algo.minibatches = 4;
    c.algo.epochs = 2;
    c.algo.bonus_feature_dim = 8;
    c.algo.target_update_interval = 50;
    c.nets.hidden = vec![16, 16];
    c
}
