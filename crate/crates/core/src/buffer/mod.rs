//! Experience storage: a uniform replay ring for off-policy learners and a
//! rollout buffer with advantage estimation for on-policy learners.

mod replay;
mod rollout;

pub use replay::{Batch, ReplayBuffer, Transition};
pub use rollout::{compute_gae, RolloutBuffer};
