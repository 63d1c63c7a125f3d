//! Training and evaluation loops, run artifacts, checkpoints and
//! multi-run reports.

mod checkpoint;
mod report;

pub use checkpoint::{load_checkpoint, restore_agent, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use report::{read_eval_log, report, write_report, CurvePoint, ReportOutput, RunCurve, SummaryRow};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::agent::{ActMode, Agent, LossReport};
use crate::algo::{build_agent, Seeds};
use crate::buffer::Transition;
use crate::config::ConfigTree;
use crate::env::{make_env, EnvId};
use crate::error::{Error, Result};

pub const TRAIN_LOG_HEADER: [&str; 9] = [
    "step",
    "episode",
    "ep_return",
    "ep_length",
    "loss_actor",
    "loss_critic",
    "loss_alpha",
    "alpha",
    "wall_s",
];
pub const EVAL_LOG_HEADER: [&str; 4] = ["step", "mean_return", "std_return", "episodes"];

pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVAL_LOG: &str = "eval_log.csv";
pub const CHECKPOINT_LATEST: &str = "checkpoint_latest.json";
/// Its presence marks a completed run.
pub const CHECKPOINT_FINAL: &str = "checkpoint_final.json";

/// Returns of a batch of deterministic evaluation episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.returns.iter().map(|r| (r - m).powi(2)).sum::<f64>() / self.returns.len() as f64)
            .sqrt()
    }
}

/// One finished training episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub step: u64,
    pub episode: u64,
    pub ep_return: f64,
    pub ep_length: u64,
    pub losses: LossReport,
    pub wall_s: Option<f64>,
}

impl EpisodeRecord {
    fn to_row(&self) -> Vec<String> {
        let loss = |k: &str| self.losses.get(k).map(f64::to_string).unwrap_or_default();
        vec![
            self.step.to_string(),
            self.episode.to_string(),
            self.ep_return.to_string(),
            self.ep_length.to_string(),
            loss("loss_actor"),
            loss("loss_critic"),
            loss("loss_alpha"),
            loss("alpha"),
            self.wall_s.map(|w| w.to_string()).unwrap_or_default(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub result: EvalResult,
}

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub episodes: Vec<EpisodeRecord>,
    pub evaluations: Vec<EvalRecord>,
    /// Set when `experiment.target_return` ended the run early.
    pub target_reached: bool,
}

impl RunSummary {
    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evaluations.last()
    }
}

/// Runs `episodes` deterministic episodes on a fresh environment seeded
/// with `seed`. The agent does not learn.
pub fn evaluate_agent(
    agent: &mut dyn Agent,
    env_id: EnvId,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut env = make_env(env_id);
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut obs = env.reset(if ep == 0 { Some(seed) } else { None });
        let mut total = 0.0;
        loop {
            let action = agent.act(&obs, ActMode::Deterministic)?;
            let r = env.step(&action)?;
            total += r.reward;
            if r.terminated || r.truncated {
                break;
            }
            obs = r.observation;
        }
        returns.push(total);
    }
    Ok(EvalResult { returns })
}

fn log_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Log {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

struct CsvLog {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl CsvLog {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(&path).map_err(|e| log_error(&path, e))?;
        writer.write_record(header).map_err(|e| log_error(&path, e))?;
        writer.flush()?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| log_error(&self.path, e))?;
        self.writer.flush()?;
        Ok(())
    }
}

fn evaluate_and_log(
    agent: &mut dyn Agent,
    config: &ConfigTree,
    step: u64,
    log: &mut CsvLog,
    out_dir: &Path,
) -> Result<EvalRecord> {
    let e = &config.experiment;
    let result = evaluate_agent(agent, e.env_id, e.eval_episodes, Seeds::from_root(e.seed).eval)?;
    log.row(&[
        step.to_string(),
        result.mean().to_string(),
        result.std().to_string(),
        result.returns.len().to_string(),
    ])?;
    save_checkpoint(&out_dir.join(CHECKPOINT_LATEST), agent, config)?;
    Ok(EvalRecord { step, result })
}

/// Trains one agent as configured, writing all artifacts into
/// `experiment.out_dir`.
pub fn train(config: &ConfigTree, force: bool) -> Result<RunSummary> {
    config.validate()?;
    let e = &config.experiment;
    let out_dir = PathBuf::from(&e.out_dir);
    if out_dir.join(CHECKPOINT_FINAL).exists() && !force {
        return Err(Error::RunExists(out_dir));
    }
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join(CONFIG_FILE), config.to_json()?)?;
    let _ = fs::remove_file(out_dir.join(CHECKPOINT_LATEST));

    let mut train_log = CsvLog::create(out_dir.join(TRAIN_LOG), &TRAIN_LOG_HEADER)?;
    let mut eval_log = CsvLog::create(out_dir.join(EVAL_LOG), &EVAL_LOG_HEADER)?;

    let seeds = Seeds::from_root(e.seed);
    let mut env = make_env(e.env_id);
    let mut agent = build_agent(config, &env.observation_space(), &env.action_space())?;
    let clock = Instant::now();

    let mut summary = RunSummary {
        out_dir: out_dir.clone(),
        episodes: Vec::new(),
        evaluations: Vec::new(),
        target_reached: false,
    };
    let mut obs = env.reset(Some(seeds.env));
    let mut last_losses = LossReport::new();
    let (mut episode, mut ep_return, mut ep_length) = (0u64, 0.0, 0u64);
    let update_every = config.algo.update_every.max(1);

    for step in 1..=e.total_steps {
        let action = agent.act(&obs, ActMode::Stochastic)?;
        let r = env.step(&action)?;
        ep_return += r.reward;
        ep_length += 1;
        let done = r.terminated || r.truncated;
        agent.observe(Transition {
            state: obs,
            action,
            reward: r.reward,
            next_state: r.observation.clone(),
            terminated: r.terminated,
            truncated: r.truncated,
        })?;
        if step % update_every == 0 {
            if let Some(report) = agent.learn()? {
                last_losses = report;
            }
        }
        if done {
            let record = EpisodeRecord {
                step,
                episode,
                ep_return,
                ep_length,
                losses: last_losses.clone(),
                wall_s: e.record_wall_time.then(|| clock.elapsed().as_secs_f64()),
            };
            train_log.row(&record.to_row())?;
            summary.episodes.push(record);
            episode += 1;
            ep_return = 0.0;
            ep_length = 0;
            obs = env.reset(None);
        } else {
            obs = r.observation;
        }
        if step % e.eval_every == 0 {
            let rec = evaluate_and_log(agent.as_mut(), config, step, &mut eval_log, &out_dir)?;
            let reached = e.target_return.is_some_and(|t| rec.result.mean() >= t);
            summary.evaluations.push(rec);
            if reached {
                summary.target_reached = true;
                break;
            }
        }
    }
    if !summary.target_reached && e.total_steps > 0 && e.total_steps % e.eval_every != 0 {
        let rec = evaluate_and_log(agent.as_mut(), config, e.total_steps, &mut eval_log, &out_dir)?;
        summary.evaluations.push(rec);
    }
    save_checkpoint(&out_dir.join(CHECKPOINT_FINAL), agent.as_ref(), config)?;
    Ok(summary)
}

/// Loads a checkpoint and evaluates its deterministic policy.
pub fn evaluate(checkpoint: impl AsRef<Path>, episodes: usize, seed: u64) -> Result<EvalResult> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mut agent = restore_agent(&ckpt)?;
    evaluate_agent(agent.as_mut(), ckpt.config.experiment.env_id, episodes, seed)
}
