//! Small agents and batches shared by several test targets.

use rlkit::agent::{ActorCritic, CriticEnsemble, OffPolicySettings, Reduce};
use rlkit::algo::ddpg::{DeterministicActor, QCritic};
use rlkit::algo::AlgoId;
use rlkit::buffer::{Batch, Transition};
use rlkit::env::Action;
use rlkit::nets::{Activation, Head, Mlp, MlpSpec};
use rlkit::{AdamConfig, Rng};

pub const OBS: usize = 3;
pub const ACT: usize = 2;

pub fn random_batch(rng: &mut Rng, n: usize, terminal_every: usize) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|i| Transition {
            state: (0..OBS).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            action: Action::Continuous((0..ACT).map(|_| rng.uniform(-1.0, 1.0)).collect()),
            reward: rng.uniform(-1.0, 1.0),
            next_state: (0..OBS).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            terminated: terminal_every > 0 && i % terminal_every == 0,
            truncated: false,
        })
        .collect();
    Batch::from_transitions(&items.iter().collect::<Vec<_>>()).unwrap()
}

pub fn net(input: usize, out: usize, head: Head, rng: &mut Rng) -> Mlp {
    Mlp::init(MlpSpec::new(input, &[6, 5], out, Activation::Tanh, head), rng).unwrap()
}

pub fn ensemble(n: usize, rng: &mut Rng) -> CriticEnsemble {
    let spec = MlpSpec::new(OBS + ACT, &[6, 5], 1, Activation::Tanh, Head::QValue);
    CriticEnsemble::new(spec, n, Reduce::Min, AdamConfig::with_lr(1e-2), rng).unwrap()
}

pub fn settings(policy_delay: u64) -> OffPolicySettings {
    OffPolicySettings {
        obs_dim: OBS,
        action_dim: ACT,
        batch_size: 8,
        warmup_steps: 0,
        policy_delay,
        tau: 0.05,
        buffer_capacity: 100,
    }
}

pub type Deterministic = ActorCritic<DeterministicActor, QCritic>;

/// A DDPG agent with twin identical critics and the TD3 agent with the same
/// networks, no target smoothing and no policy delay.
pub fn twin_agents(seed: u64) -> (ActorCritic<DeterministicActor, QCritic>, ActorCritic<DeterministicActor, QCritic>) {
    let mut rng = Rng::seed_from(seed);
    let actor_net = net(OBS, ACT, Head::DeterministicBounded, &mut rng);
    let q = ensemble(1, &mut rng).members()[0].clone();
    let twins = || {
        CriticEnsemble::from_members(vec![q.clone(), q.clone()], Reduce::Min, AdamConfig::with_lr(1e-2))
            .unwrap()
    };
    let ddpg = ActorCritic::new(
        AlgoId::Ddpg,
        DeterministicActor::new(actor_net.clone(), AdamConfig::with_lr(1e-2), 0.1, 0.0, 0.0),
        QCritic::new(twins(), 0.99),
        settings(1),
        Rng::seed_from(seed + 1),
    );
    let td3 = ActorCritic::new(
        AlgoId::Td3,
        DeterministicActor::new(actor_net, AdamConfig::with_lr(1e-2), 0.1, 0.0, 0.5),
        QCritic::new(twins(), 0.99),
        settings(1),
        Rng::seed_from(seed + 1),
    );
    (ddpg, td3)
}
