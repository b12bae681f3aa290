//! `umclust`: clustering by unmasking from the command line.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 I/O or
//! input format errors.

mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ClusterArgs, EvalArgs, KMeansArgs, PredictArgs, RerunArgs, UnmaskArgs};

#[derive(Debug, Parser)]
#[command(name = "umclust", version, about = "Agglomerative clustering by unmasking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cluster a feature matrix and write the result and a run manifest.
    Cluster(ClusterArgs),
    /// Score predicted labels against ground truth (ACC, NMI, McNemar).
    Eval(EvalArgs),
    /// k-means baseline.
    Kmeans(KMeansArgs),
    /// Print the unmasking curve for two sample sets.
    UnmaskScore(UnmaskArgs),
    /// Assign new samples to the nearest centroid of a clustering result.
    Predict(PredictArgs),
    /// Repeat a `cluster` or `kmeans` run from its manifest.
    Rerun(RerunArgs),
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<umclust::Error> for CliError {
    fn from(e: umclust::Error) -> Self {
        let code = if e.is_input_error() { 3 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("UMCLUST_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("UMCLUST_THREADS must be a number, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot size worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Cluster(args) => commands::cluster(args),
        Command::Eval(args) => commands::eval(args),
        Command::Kmeans(args) => commands::kmeans(args),
        Command::UnmaskScore(args) => commands::unmask_score(args),
        Command::Predict(args) => commands::predict(args),
        Command::Rerun(args) => commands::rerun(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
