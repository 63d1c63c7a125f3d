use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::algo::{build_agent, AlgoId};
use crate::config::ConfigTree;
use crate::env::make_env;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub algo_id: AlgoId,
    pub config: ConfigTree,
    pub params: BTreeMap<String, Tensor>,
}

pub fn save_checkpoint(path: &Path, agent: &dyn Agent, config: &ConfigTree) -> Result<()> {
    let ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        algo_id: agent.algo(),
        config: config.clone(),
        params: agent.export_params(),
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string(&ckpt)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {v} (expected {CHECKPOINT_VERSION})",
                path.display()
            )))
        }
        None => {
            return Err(Error::Checkpoint(format!("{}: missing version", path.display())))
        }
    }
    let ckpt: Checkpoint = serde_json::from_value(raw)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if ckpt.algo_id != ckpt.config.experiment.algo_id {
        return Err(Error::Checkpoint(format!(
            "{}: algo_id {} disagrees with the config ({})",
            path.display(),
            ckpt.algo_id,
            ckpt.config.experiment.algo_id
        )));
    }
    Ok(ckpt)
}

/// Rebuilds the agent described by the checkpoint and loads its arrays.
pub fn restore_agent(ckpt: &Checkpoint) -> Result<Box<dyn Agent>> {
    let env = make_env(ckpt.config.experiment.env_id);
    let mut agent = build_agent(&ckpt.config, &env.observation_space(), &env.action_space())?;
    agent.import_params(&ckpt.params)?;
    Ok(agent)
}
