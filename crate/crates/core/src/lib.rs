pub mod error;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{Adam, AdamConfig, Axis, Gradients, Graph, Tensor, Var};
pub mod env;
pub mod nets;
pub mod buffer;
pub mod config;
pub mod agent;
pub mod algo;
pub mod experiment;
