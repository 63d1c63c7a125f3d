use std::f64::consts::PI;

use super::{Action, Env, Space, StepResult};
use crate::error::{Error, Result};
use crate::rng::Rng;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const G: f64 = 10.0;
const M: f64 = 1.0;
const L: f64 = 1.0;

/// Wraps an angle into `[-π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Torque-controlled pendulum swing-up. `θ = 0` is upright. Observation is
/// `(cos θ, sin θ, θ̇)`; the single action is a torque in `[-2, 2]`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
    rng: Rng,
    needs_reset: bool,
    observation_space: Space,
    action_space: Space,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Pendulum {
    pub fn new() -> Self {
        Self {
            theta: 0.0,
            theta_dot: 0.0,
            rng: Rng::seed_from(0),
            needs_reset: true,
            observation_space: Space::Box {
                low: vec![-1.0, -1.0, -MAX_SPEED],
                high: vec![1.0, 1.0, MAX_SPEED],
            },
            action_space: Space::Box {
                low: vec![-MAX_TORQUE],
                high: vec![MAX_TORQUE],
            },
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.needs_reset = false;
    }

    pub fn cost(theta: f64, theta_dot: f64, torque: f64) -> f64 {
        angle_normalize(theta).powi(2) + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque
    }

    /// Semi-implicit Euler: velocity first, then position with the new
    /// velocity.
    pub fn dynamics(theta: f64, theta_dot: f64, torque: f64) -> (f64, f64) {
        let u = torque.clamp(-MAX_TORQUE, MAX_TORQUE);
        let acc = 3.0 * G / (2.0 * L) * theta.sin() + 3.0 / (M * L * L) * u;
        let new_dot = (theta_dot + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
        (theta + new_dot * DT, new_dot)
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

impl Env for Pendulum {
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
        self.theta = self.rng.uniform(-PI, PI);
        self.theta_dot = self.rng.uniform(-1.0, 1.0);
        self.needs_reset = false;
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.needs_reset {
            return Err(Error::EpisodeFinished);
        }
        if !self.action_space.contains(action) {
            return Err(Error::InvalidAction(action.to_string()));
        }
        let torque = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => unreachable!("checked by contains"),
        };
        let reward = -Self::cost(self.theta, self.theta_dot, torque);
        (self.theta, self.theta_dot) = Self::dynamics(self.theta, self.theta_dot, torque);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated: false,
            truncated: false,
        })
    }
}
