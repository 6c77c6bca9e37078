//! Deterministic scenario runner.
//!
//! Replays a scenario's timed events against an in-process federation and
//! produces a structured run log plus a metrics summary. There is no wall
//! clock and no randomness anywhere in here: time is the scenario's integer
//! minutes, ties resolve by file order, and every collection iterates in a
//! fixed order, so the same scenario always yields byte-identical output.
//!
//! The log is newline-delimited JSON with sorted keys, one entry per line,
//! numbered by `seq`. Active contracts complete automatically when their
//! interval ends; a request displaced by preemption re-enters the queue
//! immediately with its original description.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::binding::{CancelReason, Contract, ContractStatus, ContractStore};
use crate::descriptions::{
    format_offer, format_request, FormatOptions, ServiceRequest, SourceKind,
};
use crate::federation::{
    resolve_request, CcId, Federation, FederationError, MessageRecord, TopologyError,
};
use crate::kb::KnowledgeBase;
use crate::matcher::MatchConfig;
use crate::scenario::{payload_to_raw, source_kind_of, EventKind, EventSpec, Scenario};
use crate::scheduler::{score, select_with_preemption, Booking};
use crate::units::{Minutes, TimeInterval};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// match by identifier equality only; no KB reasoning
    pub syntactic_only: bool,
    /// overrides the scenario's own hop limit when set
    pub hop_limit: Option<u32>,
    /// tolerate unknown payload fields, logging warnings instead
    pub lenient: bool,
}

/// Counter summary of one run. Serialized with the scenario name attached;
/// field names are the stable external interface. `requests_total` counts
/// enqueues (a preempted request counts again when requeued), so
/// `requests_total = matched_local + matched_forwarded + unmatched` holds on
/// every run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub requests_total: u64,
    pub matched_local: u64,
    pub matched_forwarded: u64,
    pub unmatched: u64,
    pub preemptions: u64,
    pub requeues: u64,
    /// mean minutes between resolving a request and its booked start
    pub mean_wait_minutes: f64,
    /// total price of contracts that completed
    pub community_cost_cents: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub log: Vec<Value>,
    pub metrics: Metrics,
}

impl RunReport {
    /// Canonical log serialization: one JSON object per line, keys sorted.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.log {
            out.push_str(&entry.to_string());
            out.push('\n');
        }
        out
    }

    /// Canonical metrics serialization: pretty JSON, keys sorted, trailing
    /// newline.
    pub fn metrics_text(&self) -> String {
        let mut value = serde_json::to_value(&self.metrics).expect("metrics serialize");
        value["scenario"] = json!(self.scenario);
        format!("{value:#}\n")
    }
}

/// Only malformed inputs fail a run; event-level trouble (settling a request
/// that never matched, unregistering a missing record) is logged as a
/// WARNING entry and the run continues.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Federation(#[from] FederationError),
}

struct Pending {
    request: ServiceRequest,
    origin: CcId,
}

struct Runner<'a> {
    kb: &'a KnowledgeBase,
    fed: Federation,
    contracts: ContractStore,
    faults: crate::federation::FaultPlan,
    match_config: MatchConfig,
    format_opts: FormatOptions,
    hop_limit: u32,
    horizon: Minutes,
    log: Vec<Value>,
    metrics: Metrics,
    /// sum and count behind the mean wait metric
    wait_sum: Minutes,
    matches: u64,
    next_request_seq: u64,
    next_booking_seq: u64,
}

/// Replays the scenario and returns its log and metrics.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunReport, RunError> {
    run_scenario_full(scenario, options).map(|(report, _, _)| report)
}

/// Like [`run_scenario`] but also returns the end states, so tests can check
/// that replaying the log reconstructs them.
pub fn run_scenario_full(
    scenario: &Scenario,
    options: &RunOptions,
) -> Result<(RunReport, Federation, ContractStore), RunError> {
    let fed = Federation::build(scenario.topology.clone())?;
    let mut runner = Runner {
        kb: &scenario.kb,
        fed,
        contracts: ContractStore::new(),
        faults: scenario.faults.clone(),
        match_config: MatchConfig { syntactic_only: options.syntactic_only, allow_narrower: false },
        format_opts: FormatOptions { lenient: options.lenient },
        hop_limit: options.hop_limit.unwrap_or(scenario.hop_limit),
        horizon: scenario.horizon,
        log: Vec::new(),
        metrics: Metrics::default(),
        wait_sum: 0,
        matches: 0,
        next_request_seq: 1,
        next_booking_seq: 1,
    };
    for event in &scenario.events {
        runner.advance_to(event.time);
        runner.process(event)?;
    }
    runner.advance_to(scenario.horizon);
    runner.metrics.mean_wait_minutes =
        if runner.matches > 0 { runner.wait_sum as f64 / runner.matches as f64 } else { 0.0 };
    let report =
        RunReport { scenario: scenario.name.clone(), log: runner.log, metrics: runner.metrics };
    Ok((report, runner.fed, runner.contracts))
}

impl Runner<'_> {
    fn entry(&mut self, at: Minutes, event: &str, mut fields: Value) {
        fields["at"] = json!(at);
        fields["event"] = json!(event);
        fields["seq"] = json!(self.log.len() as u64 + 1);
        self.log.push(fields);
    }

    /// Completes every active contract whose interval has ended by `t`, in
    /// (end, contract) order, each at its own end time.
    fn advance_to(&mut self, t: Minutes) {
        loop {
            let next = self
                .contracts
                .contracts()
                .filter(|c| c.status == ContractStatus::Active && c.interval.end <= t)
                .map(|c| (c.interval.end, c.seq, c.contract_id.clone()))
                .min();
            let Some((end, _, contract_id)) = next else { break };
            let contract =
                self.contracts.complete(&contract_id, end).expect("contract is active").clone();
            self.release_booking(&contract);
            self.entry(end, "COMPLETED", json!({ "contract_id": contract_id }));
            self.metrics.community_cost_cents += contract.price;
        }
    }

    fn warn(&mut self, event: &EventSpec, reason: String) {
        self.entry(
            event.time,
            "WARNING",
            json!({ "cc": event.cc, "kind": event.kind.as_str(), "reason": reason }),
        );
    }

    fn release_booking(&mut self, contract: &Contract) {
        let cc = CcId::new(&contract.cc).expect("stored cc ids are valid");
        if let Some(state) = self.fed.get_mut(&cc) {
            if let Some(ledger) = state.ledgers.get_mut(&contract.record_id) {
                ledger.release_by_contract(&contract.contract_id);
                if ledger.is_empty() {
                    state.ledgers.remove(&contract.record_id);
                }
            }
        }
    }

    fn process(&mut self, event: &EventSpec) -> Result<(), RunError> {
        match event.kind {
            EventKind::Register => self.on_register(event),
            EventKind::Request => self.on_request(event),
            EventKind::Unregister => {
                self.on_unregister(event);
                Ok(())
            }
            EventKind::Settle => {
                self.on_settle(event);
                Ok(())
            }
        }
    }

    fn on_register(&mut self, event: &EventSpec) -> Result<(), RunError> {
        let raw = payload_to_raw(source_kind_of(&event.payload), &event.payload);
        let formatted = format_offer(&raw, self.kb, self.horizon, self.format_opts)
            .expect("payload was validated at load time");
        let state = self.fed.get_mut(&event.cc).expect("topology was validated");
        let record = state.registry.register(formatted.value, event.time);
        let mut fields = json!({
            "cc": event.cc,
            "record_id": record.record_id,
            "provider": record.offer.provider,
            "provider_type": record.offer.provider_type,
            "service_type": record.offer.concept,
        });
        if !formatted.warnings.is_empty() {
            fields["warnings"] = json!(formatted.warnings);
        }
        self.entry(event.time, "REGISTERED", fields);
        Ok(())
    }

    fn on_request(&mut self, event: &EventSpec) -> Result<(), RunError> {
        let mut payload = event.payload.clone();
        if !payload.contains_key("id") {
            payload.insert("id".into(), format!("q-{:04}", self.next_request_seq));
            self.next_request_seq += 1;
        }
        let raw = payload_to_raw(SourceKind::HumanForm, &payload);
        let formatted = format_request(&raw, self.kb, self.format_opts)
            .expect("payload was validated at load time");
        let request = formatted.value;
        let mut fields = json!({
            "cc": event.cc,
            "request_id": request.id,
            "requester": request.requester,
            "service_type": request.concept,
            "priority": request.priority,
            "window": [request.window.start, request.window.end],
        });
        if !formatted.warnings.is_empty() {
            fields["warnings"] = json!(formatted.warnings);
        }
        self.entry(event.time, "REQUEST", fields);

        let mut queue = VecDeque::from([Pending { request, origin: event.cc.clone() }]);
        while let Some(pending) = queue.pop_front() {
            self.resolve_one(pending, event.time, &mut queue)?;
        }
        Ok(())
    }

    fn unmatched(&mut self, at: Minutes, request_id: &str, reason: &str) {
        self.entry(at, "UNMATCHED", json!({ "request_id": request_id, "reason": reason }));
        self.metrics.unmatched += 1;
    }

    fn resolve_one(
        &mut self,
        pending: Pending,
        at: Minutes,
        queue: &mut VecDeque<Pending>,
    ) -> Result<(), RunError> {
        let Pending { request, origin } = pending;
        // one enqueue, one resolution: counted here so requeues count again
        self.metrics.requests_total += 1;
        if request.window.end <= at {
            self.unmatched(at, &request.id, "window_elapsed");
            return Ok(());
        }
        let mut effective = request;
        if effective.window.start < at {
            effective.window = TimeInterval::new(at, effective.window.end).expect("end > at");
            if effective.estimated_duration > effective.window.len() {
                self.unmatched(at, &effective.id, "window_too_short");
                return Ok(());
            }
        }

        let mut messages: Vec<MessageRecord> = Vec::new();
        let outcome = resolve_request(
            &self.fed,
            self.kb,
            &origin,
            &effective,
            self.match_config,
            self.hop_limit,
            &self.faults,
            at,
            &mut messages,
        )?;
        for m in &messages {
            let mut fields = json!({
                "kind": m.kind,
                "from": m.from,
                "to": m.to,
                "request_id": m.request_id,
                "dropped": m.dropped,
            });
            if let Some(h) = m.hops_remaining {
                fields["hops_remaining"] = json!(h);
            }
            if let Some(c) = m.candidates {
                fields["candidates"] = json!(c);
            }
            self.entry(m.at, "MESSAGE", fields);
        }

        let Some(responder) = outcome.responder else {
            self.unmatched(at, &effective.id, "no_candidates");
            return Ok(());
        };
        let scored = score(&effective, &outcome.candidates);
        let ledgers = &self.fed.get(&responder).expect("responder exists").ledgers;
        let Some(selection) = select_with_preemption(&effective, &scored, ledgers) else {
            self.unmatched(at, &effective.id, "no_feasible_slot");
            return Ok(());
        };

        let mut fields = json!({
            "request_id": effective.id,
            "responder": responder,
            "local": outcome.local,
            "record_id": selection.candidate.record.record_id,
            "provider": selection.candidate.record.offer.provider,
            "degree": selection.candidate.degree.label(),
            "score": selection.score,
            "candidates_considered": outcome.candidates.len(),
        });
        if let Some(h) = selection.candidate.degree.hops() {
            fields["hops"] = json!(h);
        }
        self.entry(at, "MATCHED", fields);
        if outcome.local {
            self.metrics.matched_local += 1;
        } else {
            self.metrics.matched_forwarded += 1;
        }
        self.wait_sum += selection.interval.start - at;
        self.matches += 1;

        let (contract, invocation) =
            self.contracts.bind(&effective, &selection, origin.as_str(), responder.as_str(), at);

        // displace the victim before committing the new booking
        let mut requeued: Option<ServiceRequest> = None;
        if let Some(victim_booking) = &selection.preempted {
            let victim_id = victim_booking.contract_id.clone();
            self.contracts
                .preempt(&victim_id, &contract.contract_id, at)
                .expect("victim contract is active");
            let victim = self.contracts.get(&victim_id).expect("victim exists").clone();
            self.release_booking(&victim);
            self.entry(
                at,
                "PREEMPTED",
                json!({
                    "contract_id": victim_id,
                    "by_contract": contract.contract_id,
                    "request_id": victim.request.id,
                    "record_id": victim.record_id,
                }),
            );
            self.metrics.preemptions += 1;
            queue.push_back(Pending {
                request: victim.request.clone(),
                origin: CcId::new(&victim.origin_cc).expect("stored cc ids are valid"),
            });
            requeued = Some(victim.request);
        }

        let booking = Booking {
            seq: self.next_booking_seq,
            contract_id: contract.contract_id.clone(),
            request_id: effective.id.clone(),
            interval: selection.interval,
            priority: effective.priority,
        };
        self.next_booking_seq += 1;
        self.fed
            .get_mut(&responder)
            .expect("responder exists")
            .ledgers
            .entry(selection.candidate.record.record_id.clone())
            .or_default()
            .book(booking);

        self.entry(
            at,
            "CONTRACT",
            json!({
                "contract_id": contract.contract_id,
                "request_id": effective.id,
                "cc": responder,
                "record_id": contract.record_id,
                "provider": contract.provider,
                "service_type": contract.concept,
                "degree": contract.degree.label(),
                "interval": [contract.interval.start, contract.interval.end],
                "price": contract.price,
            }),
        );
        if let Some(inv) = invocation {
            self.entry(
                at,
                "INVOCATION",
                json!({ "contract_id": inv.contract_id, "endpoint": inv.endpoint }),
            );
        }
        if let Some(victim_request) = requeued {
            self.entry(at, "REQUEUED", json!({ "request_id": victim_request.id }));
            self.metrics.requeues += 1;
        }
        Ok(())
    }

    fn on_unregister(&mut self, event: &EventSpec) {
        let record_id = match event.payload.get("record_id") {
            Some(rid) => rid.clone(),
            None => {
                let provider = &event.payload["provider"];
                let concept = self
                    .kb
                    .resolve(&event.payload["service_type"])
                    .expect("payload was validated at load time");
                let state = self.fed.get(&event.cc).expect("topology was validated");
                match state.registry.find_by_provider(provider, &concept) {
                    Some(r) => r.record_id.clone(),
                    None => {
                        let reason =
                            format!("no record for provider '{provider}' offering '{concept}'");
                        self.warn(event, reason);
                        return;
                    }
                }
            }
        };

        // a provider leaving voids their live contracts
        let victims: Vec<String> = self
            .contracts
            .contracts()
            .filter(|c| {
                c.status == ContractStatus::Active
                    && c.cc == event.cc.as_str()
                    && c.record_id == record_id
            })
            .map(|c| c.contract_id.clone())
            .collect();
        for contract_id in victims {
            let contract = self
                .contracts
                .cancel(&contract_id, CancelReason::ProviderUnregistered, event.time)
                .expect("contract is active")
                .clone();
            self.release_booking(&contract);
            self.entry(
                event.time,
                "CANCELLED",
                json!({
                    "contract_id": contract_id,
                    "reason": CancelReason::ProviderUnregistered.as_str(),
                }),
            );
        }

        let state = self.fed.get_mut(&event.cc).expect("topology was validated");
        match state.registry.unregister(&record_id) {
            Err(e) => self.warn(event, e.to_string()),
            Ok(record) => {
                state.ledgers.remove(&record_id);
                self.entry(
                    event.time,
                    "UNREGISTERED",
                    json!({
                        "cc": event.cc,
                        "record_id": record_id,
                        "provider": record.offer.provider,
                    }),
                );
            }
        }
    }

    /// Completes a contract ahead of its interval end, named by request id
    /// or contract id.
    fn on_settle(&mut self, event: &EventSpec) {
        let found = self
            .contracts
            .contracts()
            .find(|c| {
                c.status == ContractStatus::Active
                    && match (event.payload.get("request_id"), event.payload.get("contract_id")) {
                        (Some(rid), _) => &c.request.id == rid,
                        (None, Some(cid)) => &c.contract_id == cid,
                        (None, None) => unreachable!("payload shape validated at load time"),
                    }
            })
            .map(|c| c.contract_id.clone());
        let Some(contract_id) = found else {
            let what = event
                .payload
                .iter()
                .map(|(k, v)| format!("{k} '{v}'"))
                .collect::<Vec<_>>()
                .join(", ");
            self.warn(event, format!("no active contract for {what}"));
            return;
        };
        let contract =
            self.contracts.complete(&contract_id, event.time).expect("contract is active").clone();
        self.release_booking(&contract);
        self.entry(event.time, "COMPLETED", json!({ "contract_id": contract_id }));
        self.metrics.community_cost_cents += contract.price;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario_file;
    use std::path::Path;

    fn ontology() -> serde_json::Value {
        serde_json::json!({
            "concepts": [
                {"id": "assistance", "label": "Assistance", "domain": "care"},
                {"id": "gardening", "label": "Gardening", "domain": "care"},
                {"id": "watering-flowers", "label": "Watering flowers", "domain": "care"},
                {"id": "reminder", "label": "Reminder", "domain": "care"},
                {"id": "text-display", "label": "Text display", "domain": "device"}
            ],
            "isa": [
                {"child": "gardening", "parent": "assistance"},
                {"child": "watering-flowers", "parent": "gardening"}
            ],
            "rules": [
                {"provider": "text-display", "request": "reminder",
                 "rationale": "a reminder can be shown as text on a display"}
            ]
        })
    }

    fn scenario(events: serde_json::Value) -> Scenario {
        let file = serde_json::from_value(serde_json::json!({
            "name": "t",
            "horizon": 1440,
            "ontology": ontology(),
            "topology": [
                {"id": "comm-a", "kind": "community"},
                {"id": "h-1", "kind": "house", "parent": "comm-a"}
            ],
            "events": events
        }))
        .unwrap();
        load_scenario_file(file, Path::new("."), false).unwrap()
    }

    fn run(scenario: &Scenario) -> RunReport {
        let report = run_scenario(scenario, &RunOptions::default()).unwrap();
        let m = &report.metrics;
        assert_eq!(
            m.requests_total,
            m.matched_local + m.matched_forwarded + m.unmatched,
            "request accounting must balance"
        );
        report
    }

    fn entries<'a>(report: &'a RunReport, event: &str) -> Vec<&'a Value> {
        report.log.iter().filter(|e| e["event"] == event).collect()
    }

    #[test]
    fn local_device_match_binds_and_invokes() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "h-1", "payload": {
                "service_type": "text-display", "provider": "tv-1",
                "provider_type": "device", "endpoint": "local://tv-1"
            }},
            {"time": 60, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "60", "window_end": "120", "estimated_duration": "5"
            }}
        ]));
        let report = run(&s);

        let matched = entries(&report, "MATCHED");
        assert_eq!(matched.len(), 1);
        assert_eq!(matched[0]["degree"], "RULE");
        assert_eq!(matched[0]["local"], true);
        assert_eq!(entries(&report, "MESSAGE").len(), 0);
        assert_eq!(entries(&report, "CONTRACT").len(), 1);
        let invocations = entries(&report, "INVOCATION");
        assert_eq!(invocations.len(), 1);
        assert_eq!(invocations[0]["endpoint"], "local://tv-1");
        // the contract completes on its own at the interval end
        let completed = entries(&report, "COMPLETED");
        assert_eq!(completed.len(), 1);
        assert_eq!(completed[0]["at"], 65);

        assert_eq!(report.metrics.matched_local, 1);
        assert_eq!(report.metrics.requests_total, 1);
        // booked the moment it was requested, so no wait at all
        assert!((report.metrics.mean_wait_minutes - 0.0).abs() < 1e-9);
    }

    #[test]
    fn forwarded_match_books_at_the_responder() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-7", "provider_type": "informal"
            }},
            {"time": 10, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "watering-flowers", "requester": "ap-1",
                "window_start": "480", "window_end": "600"
            }}
        ]));
        let report = run(&s);

        let messages = entries(&report, "MESSAGE");
        assert_eq!(messages.len(), 2);
        assert_eq!(messages[0]["kind"], "MATCH_REQUEST");
        assert_eq!(messages[1]["kind"], "MATCH_RESPONSE");
        let matched = entries(&report, "MATCHED");
        assert_eq!(matched[0]["degree"], "SUBSUMING");
        assert_eq!(matched[0]["hops"], 1);
        assert_eq!(matched[0]["responder"], "comm-a");
        assert_eq!(report.metrics.matched_forwarded, 1);
        assert_eq!(report.metrics.matched_local, 0);

        let contracts = entries(&report, "CONTRACT");
        assert_eq!(contracts[0]["cc"], "comm-a");
        assert_eq!(contracts[0]["interval"], serde_json::json!([480, 600]));
        // resolved at t=10, booked for t=480
        assert!((report.metrics.mean_wait_minutes - 470.0).abs() < 1e-9);
    }

    #[test]
    fn unmatched_requests_are_reported_with_a_reason() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "0", "window_end": "100"
            }}
        ]));
        let report = run(&s);
        let unmatched = entries(&report, "UNMATCHED");
        assert_eq!(unmatched.len(), 1);
        assert_eq!(unmatched[0]["reason"], "no_candidates");
        assert_eq!(report.metrics.unmatched, 1);
    }

    #[test]
    fn stale_windows_never_reach_the_matcher() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "h-1", "payload": {
                "service_type": "reminder", "provider": "svc", "provider_type": "informal"
            }},
            {"time": 200, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "0", "window_end": "100"
            }},
            {"time": 250, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "0", "window_end": "300", "estimated_duration": "200"
            }}
        ]));
        let report = run(&s);
        let unmatched = entries(&report, "UNMATCHED");
        assert_eq!(unmatched[0]["reason"], "window_elapsed");
        assert_eq!(unmatched[1]["reason"], "window_too_short");
    }

    #[test]
    fn full_calendar_fails_routine_but_yields_to_emergency() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-1", "provider_type": "informal",
                "availability": "[0,600]"
            }},
            {"time": 10, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-1",
                "window_start": "10", "window_end": "600", "estimated_duration": "590"
            }},
            {"time": 20, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-2",
                "window_start": "20", "window_end": "300"
            }},
            {"time": 30, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-3", "priority": "EMERGENCY",
                "window_start": "30", "window_end": "120", "estimated_duration": "60"
            }}
        ]));
        let report = run(&s);

        // the second routine request finds the calendar full
        let unmatched = entries(&report, "UNMATCHED");
        assert_eq!(unmatched[0]["request_id"], "q-0002");
        assert_eq!(unmatched[0]["reason"], "no_feasible_slot");

        // the emergency displaces the routine contract and rebooks
        let preempted = entries(&report, "PREEMPTED");
        assert_eq!(preempted.len(), 1);
        assert_eq!(preempted[0]["contract_id"], "c-0001");
        assert_eq!(preempted[0]["by_contract"], "c-0002");
        let requeued = entries(&report, "REQUEUED");
        assert_eq!(requeued[0]["request_id"], "q-0001");
        // the displaced request cannot fit around the emergency any more
        assert_eq!(unmatched[1]["request_id"], "q-0001");
        assert_eq!(report.metrics.preemptions, 1);
        assert_eq!(report.metrics.requeues, 1);
        assert_eq!(report.metrics.unmatched, 2);
        // three request events plus one requeue
        assert_eq!(report.metrics.requests_total, 4);

        // audit trails cross-reference the preemption
        let c1 =
            report.log.iter().find(|e| e["event"] == "CONTRACT" && e["contract_id"] == "c-0002");
        assert!(c1.is_some());
    }

    #[test]
    fn unregister_cancels_live_contracts_and_removes_the_record() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-7", "provider_type": "informal"
            }},
            {"time": 10, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-1",
                "window_start": "100", "window_end": "200"
            }},
            {"time": 50, "kind": "unregister", "cc": "comm-a", "payload": {
                "provider": "vol-7", "service_type": "gardening"
            }},
            {"time": 60, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-2",
                "window_start": "100", "window_end": "200"
            }}
        ]));
        let report = run(&s);
        let cancelled = entries(&report, "CANCELLED");
        assert_eq!(cancelled.len(), 1);
        assert_eq!(cancelled[0]["reason"], "provider_unregistered");
        assert_eq!(entries(&report, "UNREGISTERED").len(), 1);
        // the provider is gone for the second request
        assert_eq!(entries(&report, "UNMATCHED").len(), 1);
        // a cancelled contract never completes, so it costs nothing
        assert_eq!(entries(&report, "COMPLETED").len(), 0);
        assert_eq!(report.metrics.community_cost_cents, 0);
    }

    #[test]
    fn settle_completes_early_and_frees_the_calendar() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "h-1", "payload": {
                "service_type": "reminder", "provider": "svc", "provider_type": "informal",
                "price": "1200"
            }},
            {"time": 10, "kind": "request", "cc": "h-1", "payload": {
                "id": "my-reminder",
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "100", "window_end": "200", "estimated_duration": "100"
            }},
            {"time": 120, "kind": "settle", "cc": "h-1", "payload": {"request_id": "my-reminder"}},
            {"time": 130, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-2",
                "window_start": "130", "window_end": "230", "estimated_duration": "100"
            }}
        ]));
        let report = run(&s);
        // settled mid-interval; the follow-up request reuses the provider
        let completed = entries(&report, "COMPLETED");
        assert_eq!(completed.len(), 2);
        assert_eq!(completed[0]["at"], 120);
        assert_eq!(entries(&report, "CONTRACT").len(), 2);
        assert_eq!(entries(&report, "UNMATCHED").len(), 0);
        assert_eq!(report.metrics.community_cost_cents, 2400);
    }

    #[test]
    fn settling_an_unknown_contract_warns_and_continues() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "h-1", "payload": {
                "service_type": "reminder", "provider": "svc", "provider_type": "informal"
            }},
            {"time": 5, "kind": "settle", "cc": "h-1", "payload": {"request_id": "ghost"}},
            {"time": 10, "kind": "unregister", "cc": "h-1", "payload": {"record_id": "r-0099"}},
            {"time": 20, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "20", "window_end": "100"
            }}
        ]));
        let report = run(&s);
        let warnings = entries(&report, "WARNING");
        assert_eq!(warnings.len(), 2);
        assert_eq!(warnings[0]["kind"], "settle");
        assert_eq!(warnings[1]["kind"], "unregister");
        // the run keeps going: the request still matches
        assert_eq!(report.metrics.matched_local, 1);
    }

    #[test]
    fn consecutive_requests_share_a_provider_across_time() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-1", "provider_type": "informal"
            }},
            {"time": 0, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-1",
                "window_start": "0", "window_end": "100", "estimated_duration": "100"
            }},
            {"time": 100, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "gardening", "requester": "ap-2",
                "window_start": "100", "window_end": "200", "estimated_duration": "100"
            }}
        ]));
        let report = run(&s);
        // first contract completes exactly when the second request arrives
        assert_eq!(entries(&report, "CONTRACT").len(), 2);
        assert_eq!(entries(&report, "UNMATCHED").len(), 0);
        let completed = entries(&report, "COMPLETED");
        assert_eq!(completed.len(), 2);
        assert_eq!(completed[0]["at"], 100);
    }

    #[test]
    fn logs_and_metrics_are_deterministic() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-7", "provider_type": "informal"
            }},
            {"time": 0, "kind": "register", "cc": "h-1", "payload": {
                "service_type": "text-display", "provider": "tv-1",
                "provider_type": "device", "endpoint": "local://tv-1"
            }},
            {"time": 10, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "reminder", "requester": "ap-1",
                "window_start": "10", "window_end": "400"
            }},
            {"time": 20, "kind": "request", "cc": "h-1", "payload": {
                "service_type": "watering-flowers", "requester": "ap-1",
                "window_start": "480", "window_end": "600"
            }}
        ]));
        let a = run(&s);
        let b = run(&s);
        assert_eq!(a.log_text(), b.log_text());
        assert_eq!(a.metrics_text(), b.metrics_text());
        assert!(a.log_text().lines().all(|l| l.starts_with('{')));
        // seq numbering is dense and 1-based
        for (i, entry) in a.log.iter().enumerate() {
            assert_eq!(entry["seq"], i as u64 + 1);
        }
    }

    #[test]
    fn registries_are_reconstructible_from_the_log() {
        let s = scenario(serde_json::json!([
            {"time": 0, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "gardening", "provider": "vol-7", "provider_type": "informal"
            }},
            {"time": 5, "kind": "register", "cc": "comm-a", "payload": {
                "service_type": "reminder", "provider": "tel-co", "provider_type": "professional"
            }},
            {"time": 50, "kind": "unregister", "cc": "comm-a", "payload": {
                "provider": "vol-7", "service_type": "gardening"
            }}
        ]));
        let report = run(&s);

        // replay registration events from the log alone
        let mut live: std::collections::BTreeSet<(String, String)> = Default::default();
        for entry in &report.log {
            match entry["event"].as_str().unwrap() {
                "REGISTERED" => {
                    live.insert((
                        entry["cc"].as_str().unwrap().to_string(),
                        entry["record_id"].as_str().unwrap().to_string(),
                    ));
                }
                "UNREGISTERED" => {
                    live.remove(&(
                        entry["cc"].as_str().unwrap().to_string(),
                        entry["record_id"].as_str().unwrap().to_string(),
                    ));
                }
                _ => {}
            }
        }
        assert_eq!(live, [("comm-a".to_string(), "r-0002".to_string())].into_iter().collect());
    }
}
