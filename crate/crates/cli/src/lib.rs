//! Command-line pipelines over the `attest` library: dataset generation,
//! training, retrieval evaluation and theory validation. Every run writes a
//! `manifest.txt` with the resolved config and SHA-256 digests of its
//! artifacts; downstream commands refuse inputs whose digests do not match.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_eval, cmd_generate, cmd_train, cmd_validate, Common, EvalTarget};
pub use error::{CliError, Result};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "attest", version, about = "Synthetic query generation, attention embeddings and validators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's top-level `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

impl From<&CommonArgs> for Common {
    fn from(a: &CommonArgs) -> Self {
        Common {
            config: a.config.clone(),
            out: a.out.clone(),
            seed: a.seed,
            threads: a.threads,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train attention embeddings on a generated dataset.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Score a trained model and the hash baseline on the held-out queries.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// A `train` output directory, or `baseline` for the hash baseline only.
        #[arg(long)]
        model: String,
    },
    /// Run a theory suite: mean, variance, partition, pmi, blue or figure1.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        suite: String,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Runs a parsed command line, printing a short report, and returns the
/// process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECKS_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate { common } => {
            let m = cmd_generate(&common.into())?;
            println!("generated {} in {:.2}s", common.out.display(), m.duration_secs);
            Ok(true)
        }
        Command::Train { common, dataset } => {
            let m = cmd_train(&common.into(), dataset)?;
            println!("trained {} in {:.2}s", common.out.display(), m.duration_secs);
            Ok(true)
        }
        Command::Eval {
            common,
            dataset,
            model,
        } => {
            cmd_eval(&common.into(), dataset, &EvalTarget::parse(model))?;
            let summary = common.out.join(commands::SUMMARY_FILE);
            if let Ok(text) = std::fs::read_to_string(summary) {
                print!("{text}");
            }
            Ok(true)
        }
        Command::Validate { common, suite } => {
            let outcome = cmd_validate(&common.into(), suite)?;
            for c in &outcome.checks {
                println!("{c}");
            }
            Ok(outcome.all_passed())
        }
    }
}
