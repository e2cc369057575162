use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use mgeo::{CliError, ExperimentConfig, Format, Overrides, Report};

/// Martingale type/cotype, smoothness/convexity and renorming experiments.
#[derive(Debug, Parser)]
#[command(name = "mgeo", version)]
struct Args {
    /// Experiment config (JSON).
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Recompute every witnessed value in a saved JSON report.
    #[arg(long, value_name = "REPORT", conflicts_with = "config")]
    replay: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores). Reports do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn emit(text: &str, path: Option<PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            std::fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: Args) -> Result<i32, CliError> {
    if let Some(path) = args.replay {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let report = Report::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let r = mgeo::with_threads(args.threads, || mgeo::replay(&report))??;
        emit(&mgeo::render_replay(&r, args.format), args.output)?;
        return Ok(r.exit_code());
    }
    let Some(path) = args.config else {
        return Err(CliError::Config(
            "usage: mgeo <CONFIG> [OPTIONS] or mgeo --replay <REPORT>".into(),
        ));
    };
    let mut config = ExperimentConfig::load(&path)?;
    config.apply(&Overrides {
        seed: args.seed,
        budget: args.budget,
        depth: args.depth,
        tol: args.tol,
    });
    let output = args
        .output
        .or_else(|| config.output.clone().map(PathBuf::from));
    let report = mgeo::with_threads(args.threads, || mgeo::execute(config))??;
    emit(&mgeo::render(&report, args.format), output)?;
    Ok(report.status.exit_code())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let code = match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mgeo: {e}");
            e.exit_code()
        }
    };
    eprintln!("elapsed {:.3}s", start.elapsed().as_secs_f64());
    ExitCode::from(code as u8)
}
