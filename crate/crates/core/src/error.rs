use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("{op} received a value outside its domain: {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("invalid axis {axis} for a rank-{rank} tensor")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("computation graph was already consumed by backward")]
    GraphConsumed,
    #[error("unknown graph variable")]
    UnknownVar,

    #[error("invalid network spec: {0}")]
    Network(String),

    #[error("invalid space: {0}")]
    Space(String),
    #[error("action {0} is not in the action space")]
    InvalidAction(String),
    #[error("step called on a finished episode; call reset first")]
    EpisodeFinished,
    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("transition dimension mismatch: expected {expected}, got {got}")]
    TransitionDim { expected: usize, got: usize },
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("rollout was not finalized")]
    RolloutNotFinalized,

    #[error("unknown algorithm id `{0}`")]
    UnknownAlgo(String),
    #[error("algorithm `{algo}` cannot act in `{env}`: {reason}")]
    Incompatible {
        algo: String,
        env: String,
        reason: String,
    },
    #[error("missing context entry `{0}`")]
    MissingContext(&'static str),
    #[error("parameter `{0}` missing or malformed")]
    Param(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{} already contains a completed run (use force to overwrite)", .0.display())]
    RunExists(PathBuf),
    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
