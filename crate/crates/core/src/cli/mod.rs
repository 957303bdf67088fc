//! Command-line front end.
//!
//! Every subcommand reads one TOML run configuration (`--config`) and
//! accepts `--section.key=value` overrides anywhere on the command line.
//! Errors map to exit codes through [`crate::Error::exit_code`].

pub mod commands;
pub mod config;
pub mod heatmap;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::SplitName;
pub use config::{PathsConfig, RunConfig};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "kaqa",
    version,
    about = "Knowledge-aware answer selection",
    after_help = "Any configuration key can be overridden with --section.key=value, \
                  e.g. --model.variant=KNN or --kg_keep_ratio=0.4. The cache directory for \
                  linked splits and entity graphs is read from KAQA_CACHE_DIR."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    /// Checkpoint directory; defaults to `<output_dir>/checkpoint`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain TransE entity vectors on the knowledge graph.
    KgeTrain(Common),
    /// Train a ranker with early stopping on dev MAP.
    Train(Common),
    /// Score a labeled split and write a metric report and run file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Score the unlabeled questions in `paths.input`.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        checkpoint: CheckpointArgs,
    },
    /// Render the attention weights of one question as an HTML heatmap.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        checkpoint: CheckpointArgs,
        #[arg(long)]
        qid: String,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Write a synthetic dataset with a planted knowledge signal.
    GenSynthetic(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::KgeTrain(c) | Command::Train(c) | Command::GenSynthetic(c) => c,
            Command::Evaluate { common, .. }
            | Command::Predict { common, .. }
            | Command::Visualize { common, .. } => common,
        }
    }
}

/// Runs a parsed command with the given config overrides.
pub fn dispatch(command: &Command, overrides: &[String]) -> Result<()> {
    let config = RunConfig::load(command.common().config.as_deref(), overrides)?;
    match command {
        Command::GenSynthetic(_) => commands::gen_synthetic(&config),
        Command::KgeTrain(_) => commands::kge_train(&config),
        Command::Train(_) => commands::train(&config),
        Command::Evaluate {
            checkpoint, split, ..
        } => commands::evaluate(&config, checkpoint.checkpoint.as_deref(), *split),
        Command::Predict { checkpoint, .. } => {
            commands::predict(&config, checkpoint.checkpoint.as_deref())
        }
        Command::Visualize {
            checkpoint,
            qid,
            split,
            ..
        } => {
            commands::visualize(&config, checkpoint.checkpoint.as_deref(), qid, *split).map(|_| ())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (overrides, rest): (Vec<OsString>, Vec<OsString>) = args
        .into_iter()
        .map(Into::into)
        .partition(|a| a.to_str().is_some_and(config::is_override));
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let overrides: Vec<String> = overrides
        .into_iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli.command, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
