//! Command-line front end.
//!
//! Every command writes JSON outputs atomically plus a run manifest beside
//! them, prints a human summary to stdout and warnings to stderr. Exit codes:
//! 0 on success, 2 for input errors, 3 for computational errors.

mod build;
mod eval;
mod manifest;
mod mine;
mod train;

use std::ffi::OsString;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub use manifest::{file_digest, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ooc-forge", version, about = "Mine out-of-context challenge sets and evaluate robust losses")]
pub struct Cli {
    /// Worker threads for per-task and per-run parallelism (0 = all cores).
    #[arg(long, global = true, env = "OOC_FORGE_JOBS", default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split image ids into train/valid/test.
    Split(mine::SplitArgs),
    /// Mine co-occurrence/extractibility challenge sets.
    MineCe(mine::MineCeArgs),
    /// Mine gist challenge sets calibrated to existing CE sets.
    MineGist(mine::MineGistArgs),
    /// Score tasks by the hard-minus-all NLL gap of a reference model.
    ScoreTasks(build::ScoreTasksArgs),
    /// Select the challenge suite from task scores.
    SelectTasks(build::SelectTasksArgs),
    /// Train one linear-logistic model.
    Train(train::TrainArgs),
    /// Sweep a loss's hyperparameter grid and select by min-max hard NLL.
    Sweep(train::SweepArgs),
    /// Score examples with a trained model.
    Predict(train::PredictArgs),
    /// Generate a synthetic dataset with a spurious feature.
    Synth(train::SynthArgs),
    /// Compute hard/easy metrics of predictions on a challenge set.
    Eval(eval::EvalArgs),
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        3
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cli.jobs)))?;
    pool.install(|| match &cli.command {
        Command::Split(a) => mine::split(a),
        Command::MineCe(a) => mine::mine_ce(a),
        Command::MineGist(a) => mine::mine_gist(a),
        Command::ScoreTasks(a) => build::score_tasks(a),
        Command::SelectTasks(a) => build::select_tasks(a),
        Command::Train(a) => train::train(a),
        Command::Sweep(a) => train::sweep(a),
        Command::Predict(a) => train::predict(a),
        Command::Synth(a) => train::synth(a),
        Command::Eval(a) => eval::eval(a),
    })
}

pub(crate) fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

/// Adds the file name to line-numbered format errors.
pub(crate) fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Format { line, message } => Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub(crate) fn parse_ratios(values: &[f64]) -> Result<[f64; 3]> {
    <[f64; 3]>::try_from(values).map_err(|_| {
        Error::Config(format!("--ratios needs three values, got {}", values.len()))
    })
}
