//! Scenario CLI: run a scenario to a log and metrics file, generate a random
//! scenario from a seed, or validate one without running it.
//!
//! Exit codes: 0 on success, 1 when the scenario fails validation, 2 for
//! runtime trouble (unreadable or unwritable files, topology errors).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use caremesh_core::gen::generate_scenario_text;
use caremesh_core::scenario::ScenarioError;
use caremesh_core::{load_scenario, run_scenario, RunOptions};

#[derive(Parser)]
#[command(
    name = "caremesh",
    version,
    about = "Deterministic matchmaking for federated mutual assistance communities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write its event log and metrics
    Run {
        /// Scenario file to run
        #[arg(long)]
        scenario: PathBuf,
        /// Match service identifiers by string equality only, no concept
        /// reasoning
        #[arg(long)]
        syntactic_only: bool,
        /// Override the scenario's forwarding hop budget
        #[arg(long, value_name = "N")]
        hop_limit: Option<u32>,
        /// Warn about unknown payload fields instead of rejecting the file
        #[arg(long)]
        lenient: bool,
        /// Where to write the event log, one JSON object per line ("-" for
        /// stdout)
        #[arg(long)]
        log: PathBuf,
        /// Where to write the metrics JSON document ("-" for stdout)
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Generate a random, self-contained scenario from a seed
    Gen {
        /// Seed for the scenario generator; equal seeds give equal files
        #[arg(long)]
        seed: u64,
        /// Output file ("-" for stdout)
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a scenario file and report its shape without running it
    Validate {
        /// Scenario file to check
        #[arg(long)]
        scenario: PathBuf,
        /// Warn about unknown payload fields instead of rejecting the file
        #[arg(long)]
        lenient: bool,
    },
}

/// Which exit code a failure maps to.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, syntactic_only, hop_limit, lenient, log, metrics } => {
            let loaded = load(&scenario, lenient)?;
            let options = RunOptions { syntactic_only, hop_limit, lenient };
            let report = run_scenario(&loaded, &options)
                .map_err(|e| Failure::Runtime(anyhow::Error::new(e)))?;
            write_output(&log, &report.log_text())?;
            write_output(&metrics, &report.metrics_text())?;
            let m = &report.metrics;
            eprintln!(
                "{}: {} requests, {} matched locally, {} matched after forwarding, {} unmatched",
                report.scenario,
                m.requests_total,
                m.matched_local,
                m.matched_forwarded,
                m.unmatched
            );
            Ok(())
        }
        Command::Gen { seed, out } => write_output(&out, &generate_scenario_text(seed)),
        Command::Validate { scenario, lenient } => {
            let loaded = load(&scenario, lenient)?;
            println!(
                "ok: '{}' with {} coordination centers and {} events",
                loaded.name,
                loaded.topology.len(),
                loaded.events.len()
            );
            Ok(())
        }
    }
}

/// Unreadable files are runtime trouble; everything else the loader reports
/// is a problem with the scenario itself.
fn load(path: &Path, lenient: bool) -> Result<caremesh_core::Scenario, Failure> {
    load_scenario(path, lenient).map_err(|e| match e {
        ScenarioError::Io { .. } => Failure::Runtime(anyhow::Error::new(e)),
        other => Failure::Validation(anyhow::Error::new(other)),
    })
}

fn write_output(dest: &Path, content: &str) -> Result<(), Failure> {
    let result = if dest == Path::new("-") {
        std::io::stdout()
            .write_all(content.as_bytes())
            .and_then(|()| std::io::stdout().flush())
            .context("cannot write to stdout")
    } else {
        std::fs::write(dest, content).with_context(|| format!("cannot write {}", dest.display()))
    };
    result.map_err(Failure::Runtime)
}
