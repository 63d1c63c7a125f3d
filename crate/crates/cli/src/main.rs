use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use rlkit::algo::AlgoId;
use rlkit::config::{self, Partial};
use rlkit::env::EnvId;
use rlkit::experiment;
use rlkit::Result;

#[derive(Parser)]
#[command(name = "rlkit", version, about = "Train, evaluate and compare RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its run directory.
    Train {
        /// dqn, ddpg, td3, sac, ppo or drnd.
        #[arg(long)]
        algo: String,
        /// cartpole or pendulum.
        #[arg(long)]
        env: String,
        /// Root seed; every random stream derives from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Total environment steps.
        #[arg(long)]
        steps: Option<u64>,
        /// JSON file with nested or dotted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` override, applied after everything else. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite a completed run in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint with its deterministic policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarize evaluation logs of finished runs as CSV.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[allow(clippy::too_many_arguments)]
fn train(
    algo: &str,
    env: &str,
    seed: Option<u64>,
    steps: Option<u64>,
    config_file: Option<PathBuf>,
    set: &[String],
    out: Option<PathBuf>,
    force: bool,
) -> Result<()> {
    let algo: AlgoId = algo.parse()?;
    let env: EnvId = env.parse()?;
    let base = config::defaults(algo, env)?;
    let mut layers = Vec::new();
    if let Some(path) = config_file {
        layers.push(config::load_file(path)?);
    }
    let mut flags = Partial::new();
    if let Some(seed) = seed {
        flags.insert("experiment.seed".into(), Value::from(seed));
    }
    if let Some(steps) = steps {
        flags.insert("experiment.total_steps".into(), Value::from(steps));
    }
    if let Some(out) = out {
        flags.insert(
            "experiment.out_dir".into(),
            Value::from(out.to_string_lossy().into_owned()),
        );
    }
    layers.push(flags);
    let mut sets = Partial::new();
    for s in set {
        let (k, v) = config::parse_assignment(s)?;
        sets.insert(k, v);
    }
    layers.push(sets);
    let tree = config::merge(&base, &layers)?;
    let summary = experiment::train(&tree, force)?;
    match summary.final_eval() {
        Some(e) => println!(
            "{}: {} episodes, final eval at step {}: mean {} std {}",
            summary.out_dir.display(),
            summary.episodes.len(),
            e.step,
            e.result.mean(),
            e.result.std()
        ),
        None => println!("{}: no training steps", summary.out_dir.display()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            algo,
            env,
            seed,
            steps,
            config,
            set,
            out,
            force,
        } => train(&algo, &env, seed, steps, config, &set, out, force).map(|_| true),
        Command::Evaluate {
            checkpoint,
            episodes,
            seed,
        } => {
            let result = experiment::evaluate(checkpoint, episodes, seed)?;
            println!("mean_return,{}", result.mean());
            for (i, r) in result.returns.iter().enumerate() {
                println!("episode_{i},{r}");
            }
            Ok(true)
        }
        Command::Report { dirs } => {
            let out = experiment::report(&dirs);
            experiment::write_report(&out, io::stdout().lock())?;
            for (dir, e) in &out.failures {
                eprintln!("error: {}: {e}", dir.display());
            }
            Ok(out.failures.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
