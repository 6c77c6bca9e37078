//! Federation endpoint daemon. Hosts the topology described by a scenario
//! file and answers `MATCH_REQUEST` frames over newline-delimited JSON on a
//! TCP socket, one reply line per frame line.
//!
//! Exit codes: 0 on clean shutdown, 1 when the config fails validation, 2 for
//! runtime trouble (bind failures, topology errors).

use std::net::TcpListener;
use std::process::ExitCode;

use clap::Parser;

use caremesh_cli::{serve, Daemon};
use caremesh_core::load_scenario;

#[derive(Parser)]
#[command(
    name = "caremeshd",
    version,
    about = "Answers federation match requests for a hosted topology"
)]
struct Cli {
    /// Scenario file whose topology and registrations to host; request and
    /// settle events in it are ignored
    #[arg(long)]
    config: std::path::PathBuf,
    /// Address to listen on, e.g. 127.0.0.1:7411 (port 0 picks a free one)
    #[arg(long)]
    listen: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match load_scenario(&cli.config, false) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let daemon = match Daemon::from_scenario(&scenario) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for warning in daemon.warnings() {
        eprintln!("warning: {warning}");
    }
    let listener = match TcpListener::bind(&cli.listen) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", cli.listen);
            return ExitCode::from(2);
        }
    };
    match listener.local_addr() {
        // announced on stdout so callers binding port 0 learn the real port
        Ok(addr) => println!("listening on {addr}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = serve(listener, &daemon) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
