use crate::env::Action;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

/// Columnar minibatch. Discrete actions are stored as their index in a
/// single column. Flags are `0.0`/`1.0` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_states: Tensor,
    pub terminated: Tensor,
    pub truncated: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let states: Vec<&[f64]> = items.iter().map(|t| t.state.as_slice()).collect();
        let next: Vec<&[f64]> = items.iter().map(|t| t.next_state.as_slice()).collect();
        let actions: Vec<Vec<f64>> = items.iter().map(|t| t.action.to_vec()).collect();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Ok(Batch {
            states: Tensor::from_rows(&states)?,
            actions: Tensor::from_rows(&actions)?,
            rewards: Tensor::column(items.iter().map(|t| t.reward).collect()),
            next_states: Tensor::from_rows(&next)?,
            terminated: Tensor::column(items.iter().map(|t| flag(t.terminated)).collect()),
            truncated: Tensor::column(items.iter().map(|t| flag(t.truncated)).collect()),
        })
    }

    /// Discrete action indices.
    pub fn action_indices(&self) -> Vec<usize> {
        self.actions.data().iter().map(|&a| a as usize).collect()
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push writes to once the ring is full.
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn check_dims(&self, t: &Transition) -> Result<()> {
        let Some(first) = self.items.first() else {
            if t.state.len() != t.next_state.len() {
                return Err(Error::TransitionDim {
                    expected: t.state.len(),
                    got: t.next_state.len(),
                });
            }
            return Ok(());
        };
        let expected = first.state.len();
        for got in [t.state.len(), t.next_state.len()] {
            if got != expected {
                return Err(Error::TransitionDim { expected, got });
            }
        }
        let (ea, ga) = (first.action.to_vec().len(), t.action.to_vec().len());
        if ea != ga || first.action.is_discrete() != t.action.is_discrete() {
            return Err(Error::TransitionDim {
                expected: ea,
                got: ga,
            });
        }
        Ok(())
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.check_dims(&t)?;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
        Ok(())
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.next);
        older.iter().chain(newer)
    }

    /// Uniform sampling with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let picked: Vec<&Transition> = (0..batch_size)
            .map(|_| &self.items[rng.below(self.items.len())])
            .collect();
        Batch::from_transitions(&picked)
    }

    /// Slot indices a batch of `batch_size` would draw, for inspection.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch_size).map(|_| rng.below(self.items.len())).collect())
    }
}
