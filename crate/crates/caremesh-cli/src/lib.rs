//! Shared plumbing for the `caremesh` and `caremeshd` binaries.
//!
//! The interesting piece is [`Daemon`]: it hosts a scenario's whole topology
//! in one process and answers `MATCH_REQUEST` frames over newline-delimited
//! JSON, exactly as a remote coordination center would. Registries are seeded
//! by replaying the scenario's register and unregister events, so the daemon
//! serves the end state of the configured world.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::json;

use caremesh_core::scenario::{payload_to_raw, source_kind_of, EventKind, Scenario};
use caremesh_core::{
    decode_message, encode_message, format_offer, resolve_seeded, FaultPlan, Federation,
    FederationMessage, FormatOptions, KnowledgeBase, MatchConfig, TopologyError,
};

/// One hosted federation, ready to answer match requests addressed to any of
/// its coordination centers.
pub struct Daemon {
    kb: KnowledgeBase,
    fed: Federation,
    config: MatchConfig,
    warnings: Vec<String>,
}

impl Daemon {
    /// Builds the federation from a validated scenario and replays its
    /// register and unregister events so registries reflect the end state.
    /// Requests and settlements are runner concerns and are skipped here.
    pub fn from_scenario(scenario: &Scenario) -> Result<Daemon, TopologyError> {
        let mut fed = Federation::build(scenario.topology.clone())?;
        let mut warnings = Vec::new();
        let format_opts = FormatOptions::default();
        for event in &scenario.events {
            match event.kind {
                EventKind::Register => {
                    let raw = payload_to_raw(source_kind_of(&event.payload), &event.payload);
                    let formatted = format_offer(&raw, &scenario.kb, scenario.horizon, format_opts)
                        .expect("payload was validated at load time");
                    let state = fed.get_mut(&event.cc).expect("topology was validated");
                    state.registry.register(formatted.value, event.time);
                }
                EventKind::Unregister => {
                    let record_id = match event.payload.get("record_id") {
                        Some(rid) => Some(rid.clone()),
                        None => {
                            let provider = &event.payload["provider"];
                            let concept = scenario
                                .kb
                                .resolve(&event.payload["service_type"])
                                .expect("payload was validated at load time");
                            let state = fed.get(&event.cc).expect("topology was validated");
                            let found = state.registry.find_by_provider(provider, &concept);
                            if found.is_none() {
                                warnings.push(format!(
                                    "unregister at t={}: no record for provider '{provider}' offering '{concept}'",
                                    event.time
                                ));
                            }
                            found.map(|r| r.record_id.clone())
                        }
                    };
                    if let Some(record_id) = record_id {
                        let state = fed.get_mut(&event.cc).expect("topology was validated");
                        if let Err(e) = state.registry.unregister(&record_id) {
                            warnings.push(format!("unregister at t={}: {e}", event.time));
                        }
                    }
                }
                EventKind::Request | EventKind::Settle => {}
            }
        }
        Ok(Daemon { kb: scenario.kb.clone(), fed, config: MatchConfig::default(), warnings })
    }

    /// Anything odd noticed while replaying the configuration, for the
    /// operator's eyes; the daemon still serves.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Answers one frame line with one reply line. `MATCH_REQUEST` frames are
    /// resolved from the addressed center with the budget and visited set the
    /// frame carries, so the caller stays in control of loop prevention and
    /// hop limits. Anything else gets a one-line `ERROR` object; the daemon
    /// never drops a line silently.
    pub fn handle_line(&self, line: &str) -> String {
        let msg = match decode_message(line) {
            Ok(msg) => msg,
            Err(e) => return error_line(&format!("bad frame: {e}")),
        };
        let (msg_id, from, to, hops_remaining, mut visited, request) = match msg {
            FederationMessage::MatchRequest {
                msg_id,
                from,
                to,
                hops_remaining,
                visited,
                request,
                ..
            } => (msg_id, from, to, hops_remaining, visited, request),
            _ => {
                return error_line(
                    "unexpected frame type; this endpoint answers MATCH_REQUEST only",
                )
            }
        };
        if self.fed.get(&to).is_none() {
            return error_line(&format!("unknown coordination center '{to}'"));
        }
        let mut log = Vec::new();
        let outcome = resolve_seeded(
            &self.fed,
            &self.kb,
            &to,
            &request,
            self.config,
            hops_remaining,
            &mut visited,
            &FaultPlan::default(),
            0,
            &mut log,
        );
        let reply = match outcome {
            Err(e) => return error_line(&e.to_string()),
            Ok(Some((responder, candidates))) => FederationMessage::MatchResponse {
                msg_id,
                from: to,
                to: from,
                responder,
                candidates,
                visited,
            },
            Ok(None) => FederationMessage::NoMatch { msg_id, from: to, to: from, visited },
        };
        encode_message(&reply)
    }
}

fn error_line(reason: &str) -> String {
    let mut line = json!({ "reason": reason, "type": "ERROR" }).to_string();
    line.push('\n');
    line
}

/// Accepts connections one at a time and answers each frame line with one
/// reply line. Sequential service keeps replies deterministic; registries are
/// read-only here, so there is no state to race on anyway.
pub fn serve(listener: TcpListener, daemon: &Daemon) -> std::io::Result<()> {
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                if let Err(e) = serve_connection(&stream, daemon) {
                    eprintln!("connection error: {e}");
                }
            }
            Err(e) => eprintln!("accept error: {e}"),
        }
    }
    Ok(())
}

fn serve_connection(stream: &TcpStream, daemon: &Daemon) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        writer.write_all(daemon.handle_line(&line).as_bytes())?;
        writer.flush()?;
    }
}
