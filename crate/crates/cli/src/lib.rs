//! Experiment runner behind the `mgeo` binary: reads a JSON config, drives
//! one of the `estimate`, `verify`, `renorm`, `duality` experiments, and
//! emits a report whose every number can be replayed from its witness.
//!
//! Exit codes: 0 pass, 1 invariant failure (or replay mismatch), 2 config
//! error, 3 certificate violation.

use std::fmt;

pub mod config;
pub mod replay;
pub mod report;

mod commands;
mod render;

pub use commands::{DEFAULT_GAP_TOL, DEFAULT_TOL, IDENTITY_TOL, LAMBDA_TOL, SEARCH_TOL};
pub use config::{Command, ExperimentConfig, Overrides, Params};
pub use replay::{replay, ReplayReport, REPLAY_TOL};
pub use report::{Report, Results, Status, Suite};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Toolkit(martingale_geometry::Error),
    Io(String),
    Replay(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Replay(_) => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Toolkit(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Replay(m) => write!(f, "replay failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<martingale_geometry::Error> for CliError {
    fn from(e: martingale_geometry::Error) -> Self {
        CliError::Toolkit(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

/// Runs the experiment a config describes.
pub fn execute(config: ExperimentConfig) -> Result<Report, CliError> {
    let (status, results) = commands::run(&config)?;
    Ok(Report {
        command: config.command,
        versions: report::Versions::current(),
        config,
        status,
        results,
    })
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Text => render::text(report),
        Format::Csv => render::csv_report(report),
    }
}

pub fn render_replay(r: &ReplayReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("replay reports serialize");
            s.push('\n');
            s
        }
        Format::Text => render::replay_text(r),
        Format::Csv => render::replay_csv(r),
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T, CliError>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Config(e.to_string())),
    }
}
