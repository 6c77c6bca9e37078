//! Scenario files: declarative inputs for simulation runs.
//!
//! A scenario is one JSON document naming a federation topology, an ontology
//! (inline or by relative path), an optional taxonomy table, and a list of
//! timed events (register, request, unregister, settle). Event payloads are
//! raw key/value descriptions in exactly the shape the format service
//! accepts, so a scenario exercises the same parsing path as live input.
//!
//! [`load_scenario`] validates everything that can be checked statically:
//! topology shape, ontology well-formedness, payload syntax, time bounds,
//! and fault links. What a record id refers to at runtime is inherently
//! dynamic and is checked by the runner instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptions::{
    format_offer, format_request, FormatOptions, RawDescription, SourceKind,
};
use crate::federation::{CcConfig, CcId, FaultPlan, Federation, TopologyError};
use crate::kb::{parse_ontology, KnowledgeBase, OntologyLoadError};
use crate::registry::TaxonomyTable;
use crate::units::Minutes;

/// Enough for house -> community -> peer -> peer, the deepest chain the
/// supported topologies produce.
pub const DEFAULT_HOP_LIMIT: u32 = 4;

/// Serde mirror of the scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub horizon: Minutes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop_limit: Option<u32>,
    pub ontology: DocSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<DocSource>,
    pub topology: Vec<CcConfig>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<FaultSpec>,
}

/// Either a path relative to the scenario file or the document inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocSource {
    Path(String),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Register,
    Request,
    Unregister,
    /// completes an active contract ahead of its interval end
    Settle,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Register => "register",
            Self::Request => "request",
            Self::Unregister => "unregister",
            Self::Settle => "settle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: Minutes,
    /// unique tiebreaker within the file; either every event carries one or
    /// none do (then file order assigns 1, 2, ...)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    pub kind: EventKind,
    /// coordination center the event happens at
    pub cc: CcId,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// directed links that lose every frame sent across them
    #[serde(default)]
    pub drop_links: Vec<(CcId, CcId)>,
}

/// A loaded, validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: Option<u64>,
    pub horizon: Minutes,
    pub hop_limit: u32,
    pub kb: KnowledgeBase,
    pub taxonomy: Option<TaxonomyTable>,
    pub topology: Vec<CcConfig>,
    /// validated sorted by (time, seq); every seq is filled in and unique
    pub events: Vec<EventSpec>,
    pub faults: FaultPlan,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error(transparent)]
    Ontology(#[from] OntologyLoadError),
    #[error("taxonomy: {0}")]
    Taxonomy(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("event {index} (t={at}, {kind}): {reason}")]
    Event { index: usize, at: Minutes, kind: &'static str, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn read_rel(base_dir: &Path, rel: &str) -> Result<String, ScenarioError> {
    let path = base_dir.join(rel);
    std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })
}

fn resolve_doc(base_dir: &Path, source: &DocSource) -> Result<String, ScenarioError> {
    match source {
        DocSource::Path(rel) => read_rel(base_dir, rel),
        DocSource::Inline(value) => Ok(value.to_string()),
    }
}

/// Infers how a register payload reached us; purely informational.
pub fn source_kind_of(payload: &BTreeMap<String, String>) -> SourceKind {
    match payload.get("provider_type").map(String::as_str) {
        Some("device") => SourceKind::DeviceProfile,
        _ => SourceKind::HumanForm,
    }
}

pub fn payload_to_raw(kind: SourceKind, payload: &BTreeMap<String, String>) -> RawDescription {
    RawDescription { source_kind: kind, fields: payload.clone() }
}

/// Reads, parses, and validates a scenario document. `lenient` is forwarded
/// to payload formatting, mirroring how the runner will format them later.
pub fn load_scenario(path: &Path, lenient: bool) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| ScenarioError::Parse { path: path.to_path_buf(), reason: e.to_string() })?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    load_scenario_file(file, base_dir, lenient)
}

/// Same as [`load_scenario`] for an already-parsed document; `base_dir`
/// anchors relative ontology and taxonomy paths.
pub fn load_scenario_file(
    file: ScenarioFile,
    base_dir: &Path,
    lenient: bool,
) -> Result<Scenario, ScenarioError> {
    if file.horizon <= 0 {
        return Err(ScenarioError::Invalid("horizon must be positive".into()));
    }
    if file.name.trim().is_empty() {
        return Err(ScenarioError::Invalid("scenario name must not be empty".into()));
    }

    let kb = parse_ontology(&resolve_doc(base_dir, &file.ontology)?)?;
    let taxonomy = match &file.taxonomy {
        None => None,
        Some(source) => {
            let text = resolve_doc(base_dir, source)?;
            Some(
                serde_json::from_str::<TaxonomyTable>(&text)
                    .map_err(|e| ScenarioError::Taxonomy(e.to_string()))?,
            )
        }
    };

    // builds once for validation; the runner builds its own mutable instance
    let federation = Federation::build(file.topology.clone())?;

    let mut events = file.events;
    let explicit = events.iter().filter(|e| e.seq.is_some()).count();
    if explicit != 0 && explicit != events.len() {
        return Err(ScenarioError::Invalid("either every event carries a seq or none do".into()));
    }
    if explicit == 0 {
        for (i, event) in events.iter_mut().enumerate() {
            event.seq = Some(i as u64 + 1);
        }
    }
    let mut seen_seqs = std::collections::BTreeSet::new();
    for event in &events {
        let seq = event.seq.expect("seq filled in above");
        if !seen_seqs.insert(seq) {
            return Err(ScenarioError::Invalid(format!("duplicate event seq {seq}")));
        }
    }
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if (b.time, b.seq) < (a.time, a.seq) {
            return Err(ScenarioError::Invalid(format!(
                "events out of order at (time={}, seq={})",
                b.time,
                b.seq.expect("seq filled in above")
            )));
        }
    }

    let opts = FormatOptions { lenient };
    for (index, event) in events.iter().enumerate() {
        let fail = |reason: String| ScenarioError::Event {
            index,
            at: event.time,
            kind: event.kind.as_str(),
            reason,
        };
        if event.time < 0 || event.time > file.horizon {
            return Err(fail(format!("time {} is outside [0, {}]", event.time, file.horizon)));
        }
        if federation.get(&event.cc).is_none() {
            return Err(fail(format!("unknown coordination center '{}'", event.cc)));
        }
        match event.kind {
            EventKind::Register => {
                let raw = payload_to_raw(source_kind_of(&event.payload), &event.payload);
                format_offer(&raw, &kb, file.horizon, opts).map_err(|e| fail(e.to_string()))?;
            }
            EventKind::Request => {
                let mut payload = event.payload.clone();
                // the runner injects sequential ids; validate with a stand-in
                payload.entry("id".into()).or_insert_with(|| "q-0000".into());
                let raw = payload_to_raw(SourceKind::HumanForm, &payload);
                let formatted = format_request(&raw, &kb, opts).map_err(|e| fail(e.to_string()))?;
                let window = formatted.value.window;
                if window.end > file.horizon {
                    return Err(fail(format!(
                        "request window {window} extends past the horizon {}",
                        file.horizon
                    )));
                }
                if window.start < 0 {
                    return Err(fail("request window starts before t=0".into()));
                }
            }
            EventKind::Unregister => {
                let by_record = event.payload.contains_key("record_id");
                let by_offer = event.payload.contains_key("provider")
                    && event.payload.contains_key("service_type");
                if by_record == by_offer {
                    return Err(fail(
                        "payload must name either record_id or provider + service_type".into(),
                    ));
                }
                if let Some(concept) = event.payload.get("service_type") {
                    kb.resolve(concept).map_err(|e| fail(e.to_string()))?;
                }
                let known = ["record_id", "provider", "service_type"];
                if let Some(k) = event.payload.keys().find(|k| !known.contains(&k.as_str())) {
                    return Err(fail(format!("unknown payload field '{k}'")));
                }
            }
            EventKind::Settle => {
                let by_request = event.payload.contains_key("request_id");
                let by_contract = event.payload.contains_key("contract_id");
                if by_request == by_contract {
                    return Err(fail("payload must name either request_id or contract_id".into()));
                }
                let known = ["request_id", "contract_id"];
                if let Some(k) = event.payload.keys().find(|k| !known.contains(&k.as_str())) {
                    return Err(fail(format!("unknown payload field '{k}'")));
                }
            }
        }
    }

    let faults = match &file.faults {
        None => FaultPlan::default(),
        Some(spec) => {
            let mut plan = FaultPlan::default();
            for (from, to) in &spec.drop_links {
                if from == to {
                    return Err(ScenarioError::Invalid(format!(
                        "fault link '{from}' -> '{to}' is a self-loop"
                    )));
                }
                for end in [from, to] {
                    if federation.get(end).is_none() {
                        return Err(ScenarioError::Invalid(format!(
                            "fault link names unknown coordination center '{end}'"
                        )));
                    }
                }
                plan.drop_links.insert((from.clone(), to.clone()));
            }
            plan
        }
    };

    Ok(Scenario {
        name: file.name,
        seed: file.seed,
        horizon: file.horizon,
        hop_limit: file.hop_limit.unwrap_or(DEFAULT_HOP_LIMIT),
        kb,
        taxonomy,
        topology: file.topology,
        events,
        faults,
    })
}
