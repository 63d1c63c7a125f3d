use super::{Action, Env, Space, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_THRESHOLD: f64 = 2.4;

/// Cart-pole balancing with explicit Euler integration. Observation is
/// `[x, x_dot, theta, theta_dot]`; action 0 pushes left, 1 pushes right.
#[derive(Debug, Clone)]
pub struct CartPole {
    state: [f64; 4],
    rng: Rng,
    needs_reset: bool,
    observation_space: Space,
    action_space: Space,
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl CartPole {
    pub fn new() -> Self {
        let high = vec![
            X_THRESHOLD * 2.0,
            f64::INFINITY,
            THETA_THRESHOLD * 2.0,
            f64::INFINITY,
        ];
        let low = high.iter().map(|h| -h).collect();
        Self {
            state: [0.0; 4],
            rng: Rng::seed_from(0),
            needs_reset: true,
            observation_space: Space::Box { low, high },
            action_space: Space::Discrete(2),
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Places the system in an arbitrary state and starts an episode there.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.needs_reset = false;
    }

    /// One Euler step of the cart-pole equations of motion.
    pub fn dynamics(state: [f64; 4], force: f64) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ]
    }
}

impl Env for CartPole {
    fn observation_space(&self) -> &Space {
        &self.observation_space
    }

    fn action_space(&self) -> &Space {
        &self.action_space
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        if let Some(seed) = seed {
            self.rng = Rng::seed_from(seed);
        }
        for s in &mut self.state {
            *s = self.rng.uniform(-0.05, 0.05);
        }
        self.needs_reset = false;
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::EpisodeFinished);
        }
        let force = match action {
            Action::Discrete(1) => FORCE_MAG,
            Action::Discrete(0) => -FORCE_MAG,
            other => return Err(Error::InvalidAction(other.to_string())),
        };
        self.state = Self::dynamics(self.state, force);
        let [x, _, theta, _] = self.state;
        let terminated = !(-X_THRESHOLD..=X_THRESHOLD).contains(&x)
            || !(-THETA_THRESHOLD..=THETA_THRESHOLD).contains(&theta);
        self.needs_reset = terminated;
        Ok(StepResult {
            observation: self.state.to_vec(),
            reward: 1.0,
            terminated,
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_seeded_and_small() {
        let mut env = CartPole::new();
        let a = env.reset(Some(7));
        let b = env.reset(Some(7));
        assert_eq!(a, b);
        for seed in 0..50 {
            let obs = env.reset(Some(seed));
            assert_eq!(obs.len(), 4);
            assert!(obs.iter().all(|v| (-0.05..=0.05).contains(v)));
        }
    }

    #[test]
    fn euler_step_from_rest() {
        // Hand-evaluated equations at the zero state with +10 N:
        // temp = 10/1.1, theta_acc = -temp / (0.5 * (4/3 - 0.1/1.1)),
        // x_acc = temp - 0.05 * theta_acc / 1.1. Positions do not move in
        // the first step since the velocities are zero.
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        let mut env = CartPole::new();
        env.set_state([0.0; 4]);
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert_eq!(r.observation[0], 0.0);
        assert_eq!(r.observation[2], 0.0);
        assert!((r.observation[1] - 0.02 * x_acc).abs() < 1e-15);
        assert!((r.observation[3] - 0.02 * theta_acc).abs() < 1e-15);
        assert_eq!(r.reward, 1.0);
        assert!(!r.terminated);
    }

    #[test]
    fn terminates_past_thresholds_and_requires_reset() {
        let mut env = CartPole::new();
        env.set_state([2.39, 1.0, 0.0, 0.0]);
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert!(r.terminated && !r.truncated);
        assert_eq!(r.reward, 1.0);
        assert!(matches!(
            env.step(&Action::Discrete(0)),
            Err(Error::EpisodeFinished)
        ));
        env.set_state([0.0, 0.0, 0.2, 0.5]);
        assert!(env.step(&Action::Discrete(0)).unwrap().terminated);
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let mut env = CartPole::new();
        env.reset(Some(0));
        assert!(env.step(&Action::Discrete(2)).is_err());
        assert!(env.step(&Action::Continuous(vec![1.0])).is_err());
    }
}
