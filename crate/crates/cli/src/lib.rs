//! Command-line pipeline: ingest, prompt refinement, generation with the
//! quality gate, zero-shot benchmarking, scoring, learning curves, shift
//! statistics and the loopback review server.

pub mod commands;
pub mod config;
pub mod review;
pub mod rundir;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use clinsynth::ErrorClass;

/// One-line error surfaced as `error: <class>: <message>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub class: String,
    pub message: String,
}

impl CliError {
    pub fn new(class: impl Into<String>, message: impl Into<String>) -> Self {
        CliError {
            class: class.into(),
            message: message.into(),
        }
    }

    pub fn from_class<E: ErrorClass + fmt::Display>(e: &E) -> Self {
        CliError::new(e.class(), e.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("IoError", format!("{}: {e}", path.display()))
    }
}

/// Lets `?` lift any classified library error.
impl<E: ErrorClass + fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::from_class(&e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep the error on one line whatever the message holds
        write!(f, "error: {}: {}", self.class, self.message.replace('\n', " "))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "clinsynth",
    version,
    about = "Synthetic biomedical NER/RE corpora: generate, gate, benchmark, score"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate every split of the configured dataset.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run prompt refinement until it needs a selection, or apply one.
    Forge {
        #[arg(long)]
        config: PathBuf,
        /// Candidate number (1-5) chosen for the current round.
        #[arg(long)]
        select: Option<usize>,
        #[arg(long, default_value = "", requires = "select")]
        rationale: String,
    },
    /// Generate a synthetic corpus and pass it through the quality gate.
    Gen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Zero-shot benchmark on the test split.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a prediction file against a split of the dataset.
    Score {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Learning-curve sweep over the configured grid.
    Curve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Divergence statistics and scatter data, original vs synthetic.
    Shift {
        #[arg(long)]
        config: PathBuf,
        /// Synthetic corpus file; defaults to `[shift] synthetic` or the latest gen run.
        #[arg(long)]
        synthetic: Option<PathBuf>,
    },
    /// Loopback review server.
    Review {
        #[command(subcommand)]
        action: ReviewAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Gen run directory whose kept samples are reviewed; defaults to the latest.
        #[arg(long)]
        gen_run: Option<PathBuf>,
        /// Scatter TSV served at /scatter; defaults to the latest shift run.
        #[arg(long)]
        scatter: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
}

/// Runs one command, writing human-readable progress to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { config } => commands::ingest(&config, out),
        Command::Forge {
            config,
            select,
            rationale,
        } => commands::forge(&config, select, &rationale, out),
        Command::Gen { config } => commands::gen(&config, out),
        Command::Bench { config } => commands::bench(&config, out),
        Command::Score { config, pred, split } => commands::score(&config, &pred, &split, out),
        Command::Curve { config } => commands::curve(&config, out),
        Command::Shift { config, synthetic } => commands::shift(&config, synthetic.as_deref(), out),
        Command::Review {
            action:
                ReviewAction::Serve {
                    config,
                    gen_run,
                    scatter,
                    port,
                },
        } => review::serve_blocking(&config, gen_run.as_deref(), scatter.as_deref(), port, out),
    }
}
