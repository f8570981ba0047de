//! Command-line workflow: dataset build, training, sweeps, evaluation,
//! prompt experiments and reports over a workspace directory.

mod build;
pub mod figures;
mod prompt;
mod report;
mod train;
pub mod workspace;

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::modeling::ModelError;
use crate::promptlab::PromptError;
use crate::trainer::TrainError;
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;
use workspace::Workspace;

pub use build::BuildConfig;
pub use prompt::PromptConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Other = 1,
    Config = 2,
    Data = 3,
    Divergence = 4,
    Alignment = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Config, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Data, message)
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ExitKind::Other, e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::Backend(_) | ModelError::Adaptation(_) | ModelError::InvalidPooling { .. } => {
                ExitKind::Config
            }
            _ => ExitKind::Other,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let kind = match e {
            EvalError::Alignment(_) => ExitKind::Alignment,
            _ => ExitKind::Data,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::config(e.to_string()),
            TrainError::Data(_) => CliError::data(e.to_string()),
            TrainError::Divergence { .. } => CliError::new(ExitKind::Divergence, e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Eval(m) => m.into(),
            TrainError::Selection(_) => CliError::new(ExitKind::Other, e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Spec(_) => CliError::config(e.to_string()),
            PromptError::Eval(m) => m.into(),
            PromptError::Scoring { .. } => CliError::new(ExitKind::Other, e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stereomtl", version, about = "Bias and stereotype multi-task experiments")]
pub struct Cli {
    /// Workspace root holding data/, runs/ and reports/.
    #[arg(long, global = true, env = workspace::WORKSPACE_ENV, default_value = "workspace")]
    pub workspace: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel workers for sweeps and prompt scoring.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Overrides the backend id from the config.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble, aggregate, split and describe the corpus.
    BuildDataset {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Skip when a completed run with the same config exists.
        #[arg(long)]
        resume: bool,
    },
    /// Sweep the hyperparameter grid of a configuration.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score runs and test them against baselines.
    Evaluate {
        /// Run ids (directory names under runs/).
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long)]
        baseline: Vec<String>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Zero/few-shot prompt selection and test predictions.
    Prompt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Summarize completed runs.
    Report {
        #[arg(long = "run")]
        runs: Vec<String>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ws = Workspace::new(&cli.workspace);
    ws.ensure()?;
    match &cli.command {
        Command::BuildDataset { config } => build::cmd_build_dataset(&ws, config, cli.seed),
        Command::Train { config, resume } => {
            train::cmd_train(&ws, config, cli.seed, cli.backend.as_deref(), *resume).map(|_| ())
        }
        Command::Grid { config } => {
            train::cmd_grid(&ws, config, cli.seed, cli.backend.as_deref(), cli.workers).map(|_| ())
        }
        Command::Evaluate {
            runs,
            baseline,
            split,
        } => report::cmd_evaluate(&ws, runs, baseline, split).map(|_| ()),
        Command::Prompt { config } => prompt::cmd_prompt(&ws, config, cli.seed, cli.workers).map(|_| ()),
        Command::Report { runs } => report::cmd_report(&ws, runs).map(|_| ()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitKind::Config as i32 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
