//! `muse`: train, evaluate and inspect multimodal models and agents.
//!
//! Exit codes: 0 success, 1 check failure or runtime error, 2 configuration
//! error, 3 artifact mismatch.

mod agent_cmds;
mod data;
mod env_cmd;
mod gradcheck_cmd;
mod model_cmds;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "muse",
    version,
    about = "Multimodal latent models and zero-shot control"
)]
struct Cli {
    /// Sectioned `key = value` config; a previous run's manifest works too.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, replaced as a whole when the run succeeds.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `section.key=value` settings applied over the config file.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Train a generative model on a dataset and write a checkpoint.
    TrainModel,
    /// Importance-weighted likelihood bounds of a checkpoint.
    EvalLikelihood,
    /// Cross-modal samples from a checkpoint.
    Generate,
    /// Roll out an environment and dump frames, sound and rewards.
    Env,
    /// Train a policy on top of an observation adapter.
    TrainAgent,
    /// Evaluate a trained policy under modality masks.
    EvalAgent,
    /// Finite-difference checks of every op and loss.
    Gradcheck {
        /// Corrupt the backward rule of this op (test fixture).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::TrainModel => "train-model",
            Command::EvalLikelihood => "eval-likelihood",
            Command::Generate => "generate",
            Command::Env => "env",
            Command::TrainAgent => "train-agent",
            Command::EvalAgent => "eval-agent",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = run::RunOptions {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        set: cli.set,
    };
    match run::run(&cli.command, opts) {
        Ok(run::Outcome::Success) => ExitCode::SUCCESS,
        Ok(run::Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}
