use super::{Action, Env, Space, StepResult};
use crate::error::{Error, Result};

/// Flags `truncated` once `max_steps` steps have been taken in an episode,
/// unless the step also terminated.
pub struct TimeLimit {
    inner: Box<dyn Env>,
    max_steps: usize,
    elapsed: usize,
    finished: bool,
}

impl TimeLimit {
    pub fn new(inner: Box<dyn Env>, max_steps: usize) -> Self {
        assert!(max_steps >= 1, "time limit must be at least one step");
        Self {
            inner,
            max_steps,
            elapsed: 0,
            finished: true,
        }
    }

    pub fn elapsed(&self) -> usize {
        self.elapsed
    }
}

impl Env for TimeLimit {
    fn observation_space(&self) -> &Space {
        self.inner.observation_space()
    }

    fn action_space(&self) -> &Space {
        self.inner.action_space()
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        self.elapsed = 0;
        self.finished = false;
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        let mut result = self.inner.step(action)?;
        self.elapsed += 1;
        if self.elapsed >= self.max_steps && !result.terminated {
            result.truncated = true;
        }
        self.finished = result.terminated || result.truncated;
        Ok(result)
    }
}

/// Maps agent actions in `[-1, 1]^d` affinely onto the wrapped box.
pub struct ActionRescale {
    inner: Box<dyn Env>,
    low: Vec<f64>,
    high: Vec<f64>,
    unit: Space,
}

impl ActionRescale {
    pub fn new(inner: Box<dyn Env>) -> Result<Self> {
        let (low, high) = match inner.action_space() {
            Space::Box { low, high } => (low.clone(), high.clone()),
            Space::Discrete(_) => {
                return Err(Error::Space("action rescaling needs a box action space".into()))
            }
        };
        let unit = Space::boxed(vec![-1.0; low.len()], vec![1.0; low.len()])?;
        Ok(Self {
            inner,
            low,
            high,
            unit,
        })
    }

    pub fn map_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(a, (l, h))| l + 0.5 * (a + 1.0) * (h - l))
            .collect()
    }
}

impl Env for ActionRescale {
    fn observation_space(&self) -> &Space {
        self.inner.observation_space()
    }

    fn action_space(&self) -> &Space {
        &self.unit
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if !self.unit.contains(action) {
            return Err(Error::InvalidAction(action.to_string()));
        }
        let Action::Continuous(a) = action else {
            unreachable!("checked by contains")
        };
        let mapped = Action::Continuous(self.map_action(a));
        self.inner.step(&mapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CartPole, Pendulum};

    #[test]
    fn pendulum_truncates_at_limit() {
        let mut env = TimeLimit::new(Box::new(Pendulum::new()), 200);
        env.reset(Some(0));
        for t in 1..=200 {
            let r = env.step(&Action::Continuous(vec![0.0])).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, t == 200);
        }
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
        env.reset(None);
        assert_eq!(env.elapsed(), 0);
        assert!(!env.step(&Action::Continuous(vec![0.0])).unwrap().truncated);
    }

    #[test]
    fn termination_takes_precedence() {
        let mut env = TimeLimit::new(Box::new(CartPole::new()), 500);
        env.reset(Some(3));
        let mut steps = 0;
        loop {
            steps += 1;
            let r = env.step(&Action::Discrete(1)).unwrap();
            if r.terminated {
                assert!(!r.truncated);
                break;
            }
            assert!(!r.truncated);
        }
        assert!(steps < 500);
        // limit reached on the terminating step still reports terminated only
        let mut env = TimeLimit::new(Box::new(CartPole::new()), steps);
        env.reset(Some(3));
        for _ in 1..steps {
            env.step(&Action::Discrete(1)).unwrap();
        }
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert!(r.terminated && !r.truncated);
    }

    #[test]
    fn rescale_endpoints() {
        let env = ActionRescale::new(Box::new(Pendulum::new())).unwrap();
        assert_eq!(env.map_action(&[0.0]), vec![0.0]);
        assert_eq!(env.map_action(&[1.0]), vec![2.0]);
        assert_eq!(env.map_action(&[-1.0]), vec![-2.0]);
        assert!(ActionRescale::new(Box::new(CartPole::new())).is_err());
    }

    #[test]
    fn rescaled_env_rejects_out_of_unit_box() {
        let mut env = ActionRescale::new(Box::new(Pendulum::new())).unwrap();
        env.reset(Some(0));
        assert!(env.step(&Action::Continuous(vec![1.5])).is_err());
        assert!(env.step(&Action::Continuous(vec![-1.0])).is_ok());
    }
}
