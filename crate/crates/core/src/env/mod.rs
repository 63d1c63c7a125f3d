//! Native classic-control environments behind a Gymnasium-style
//! reset/step contract.

mod cartpole;
mod pendulum;
mod wrappers;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cartpole::CartPole;
pub use pendulum::Pendulum;
pub use wrappers::{ActionRescale, TimeLimit};

use crate::error::{Error, Result};

pub const CARTPOLE_MAX_STEPS: usize = 500;
pub const PENDULUM_MAX_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Discrete(usize),
    Box { low: Vec<f64>, high: Vec<f64> },
}

impl Space {
    pub fn discrete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Space(format!("discrete space needs n >= 2, got {n}")));
        }
        Ok(Space::Discrete(n))
    }

    pub fn boxed(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.is_empty() || low.len() != high.len() {
            return Err(Error::Space("box bounds must be non-empty and equal length".into()));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::Space("box needs low < high componentwise".into()));
        }
        Ok(Space::Box { low, high })
    }

    /// Number of discrete actions, or the box dimension.
    pub fn dim(&self) -> usize {
        match self {
            Space::Discrete(n) => *n,
            Space::Box { low, .. } => low.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Space::Discrete(_))
    }

    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (Space::Discrete(n), Action::Discrete(a)) => a < n,
            (Space::Box { low, high }, Action::Continuous(a)) => {
                a.len() == low.len()
                    && a.iter()
                        .zip(low.iter().zip(high))
                        .all(|(x, (l, h))| x >= l && x <= h)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn is_discrete(&self) -> bool {
        matches!(self, Action::Discrete(_))
    }

    /// Numeric encoding used in batches: the index for discrete actions.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(v) => write!(f, "{v:?}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// MDP-terminal; the only flag that suppresses bootstrapping.
    pub terminated: bool,
    /// Cut off by a time limit.
    pub truncated: bool,
}

pub trait Env {
    fn observation_space(&self) -> &Space;
    fn action_space(&self) -> &Space;
    /// Starts a new episode. `Some(seed)` reseeds the initial-state
    /// distribution; `None` continues the current stream.
    fn reset(&mut self, seed: Option<u64>) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<StepResult>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Cartpole,
    Pendulum,
}

impl EnvId {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Cartpole => "cartpole",
            EnvId::Pendulum => "pendulum",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cartpole" => Ok(EnvId::Cartpole),
            "pendulum" => Ok(EnvId::Pendulum),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }
}

/// Registered environment with its standard wrappers: CartPole is limited
/// to 500 steps; Pendulum takes agent actions in `[-1, 1]` and is limited
/// to 200 steps.
pub fn make_env(id: EnvId) -> Box<dyn Env> {
    match id {
        EnvId::Cartpole => Box::new(TimeLimit::new(Box::new(CartPole::new()), CARTPOLE_MAX_STEPS)),
        EnvId::Pendulum => Box::new(TimeLimit::new(
            Box::new(ActionRescale::new(Box::new(Pendulum::new())).expect("box action space")),
            PENDULUM_MAX_STEPS,
        )),
    }
}
