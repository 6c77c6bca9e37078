//! Hierarchical federation of coordination centers.
//!
//! Every house runs a coordination center (CC) with its own registry; houses
//! attach to one community CC, and community CCs peer with each other. A
//! request is always tried locally first. Only when the local registry has
//! no candidate does the CC forward: a house asks its parent community, a
//! community asks its peers in lexicographic order, one at a time. Requests
//! never flow downward into member houses.
//!
//! Forwarding carries a hop budget and the set of already-visited CCs, and
//! the visited set accumulated by one branch is reused when trying the next,
//! so every CC handles a given request at most once. That gives termination
//! and a hard message bound: per request, at most one MATCH_REQUEST and one
//! answer per CC beyond the origin.
//!
//! The wire form is one JSON object per line with keys in sorted order; see
//! [`encode_message`] and [`decode_message`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptions::ServiceRequest;
use crate::kb::{KbError, KnowledgeBase};
use crate::matcher::{match_request, MatchCandidate, MatchConfig};
use crate::registry::Registry;
use crate::scheduler::BookingLedger;
use crate::units::Minutes;

/// Coordination center identifier: a non-empty token without whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CcId(String);

impl CcId {
    pub fn new(raw: &str) -> Result<Self, TopologyError> {
        let id = raw.trim().to_string();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(TopologyError::BadCcId { id: raw.to_string() });
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CcId {
    type Error = TopologyError;

    fn try_from(raw: String) -> Result<Self, Self::Error> {
        Self::new(&raw)
    }
}

impl From<CcId> for String {
    fn from(id: CcId) -> String {
        id.0
    }
}

impl fmt::Display for CcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcKind {
    House,
    Community,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcConfig {
    pub id: CcId,
    pub kind: CcKind,
    /// community this house belongs to; meaningless for communities
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<CcId>,
    /// sibling communities this community may forward to
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub peers: BTreeSet<CcId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("invalid coordination center id {id:?}")]
    BadCcId { id: String },
    #[error("duplicate coordination center '{0}'")]
    DuplicateCc(CcId),
    #[error("coordination center '{cc}': {reason}")]
    Invalid { cc: CcId, reason: String },
}

/// One CC's live state: its registry and the booking calendars of its
/// records. The shared ontology lives outside, one snapshot per run.
#[derive(Debug, Clone, Default)]
pub struct CcState {
    pub config: CcConfig,
    pub registry: Registry,
    pub ledgers: BTreeMap<String, BookingLedger>,
}

impl Default for CcConfig {
    fn default() -> Self {
        Self {
            id: CcId("unconfigured".into()),
            kind: CcKind::House,
            parent: None,
            peers: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Federation {
    pub ccs: BTreeMap<CcId, CcState>,
}

impl Federation {
    /// Validates and assembles a topology: houses may name a community
    /// parent and have no peers; communities have peers but no parent.
    pub fn build(configs: Vec<CcConfig>) -> Result<Self, TopologyError> {
        let mut ccs: BTreeMap<CcId, CcState> = BTreeMap::new();
        for config in configs {
            let id = config.id.clone();
            let prev = ccs.insert(
                id.clone(),
                CcState { config, registry: Registry::new(), ledgers: BTreeMap::new() },
            );
            if prev.is_some() {
                return Err(TopologyError::DuplicateCc(id));
            }
        }
        let invalid = |cc: &CcId, reason: &str| TopologyError::Invalid {
            cc: cc.clone(),
            reason: reason.to_string(),
        };
        for state in ccs.values() {
            let cfg = &state.config;
            match cfg.kind {
                CcKind::House => {
                    if !cfg.peers.is_empty() {
                        return Err(invalid(&cfg.id, "houses do not peer"));
                    }
                    if let Some(parent) = &cfg.parent {
                        match ccs.get(parent).map(|s| s.config.kind) {
                            Some(CcKind::Community) => {}
                            Some(CcKind::House) => {
                                return Err(invalid(&cfg.id, "parent must be a community"))
                            }
                            None => {
                                return Err(invalid(&cfg.id, &format!("unknown parent '{parent}'")))
                            }
                        }
                    }
                }
                CcKind::Community => {
                    if cfg.parent.is_some() {
                        return Err(invalid(&cfg.id, "communities have no parent"));
                    }
                    for peer in &cfg.peers {
                        if peer == &cfg.id {
                            return Err(invalid(&cfg.id, "cannot peer with itself"));
                        }
                        match ccs.get(peer).map(|s| s.config.kind) {
                            Some(CcKind::Community) => {}
                            Some(CcKind::House) => {
                                return Err(invalid(&cfg.id, &format!("peer '{peer}' is a house")))
                            }
                            None => {
                                return Err(invalid(&cfg.id, &format!("unknown peer '{peer}'")))
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { ccs })
    }

    pub fn get(&self, id: &CcId) -> Option<&CcState> {
        self.ccs.get(id)
    }

    pub fn get_mut(&mut self, id: &CcId) -> Option<&mut CcState> {
        self.ccs.get_mut(id)
    }
}

// --- wire protocol ---------------------------------------------------------

/// One protocol frame. On the wire: a single JSON object per line, tagged by
/// `type`, keys sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum FederationMessage {
    #[serde(rename = "MATCH_REQUEST")]
    MatchRequest {
        msg_id: String,
        origin: CcId,
        from: CcId,
        to: CcId,
        hops_remaining: u32,
        visited: BTreeSet<CcId>,
        request: Box<ServiceRequest>,
    },
    #[serde(rename = "MATCH_RESPONSE")]
    MatchResponse {
        msg_id: String,
        from: CcId,
        to: CcId,
        /// CC whose registry produced the candidates
        responder: CcId,
        candidates: Vec<MatchCandidate>,
        visited: BTreeSet<CcId>,
    },
    #[serde(rename = "NO_MATCH")]
    NoMatch { msg_id: String, from: CcId, to: CcId, visited: BTreeSet<CcId> },
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("frame error at byte {offset}: {reason}")]
pub struct DecodeError {
    pub offset: usize,
    pub reason: String,
}

/// Encodes a frame as canonical JSON (sorted keys) plus a trailing newline.
pub fn encode_message(msg: &FederationMessage) -> String {
    let value = serde_json::to_value(msg).expect("frames serialize");
    let mut line = value.to_string();
    line.push('\n');
    line
}

/// Decodes one frame line and checks protocol invariants: distinct `from`
/// and `to`, a non-empty correlation id, a duplicate-free visited list, and
/// for requests a visited set that already contains the sender but never the
/// target.
pub fn decode_message(line: &str) -> Result<FederationMessage, DecodeError> {
    let trimmed = line.strip_suffix('\n').unwrap_or(line);
    let raw: serde_json::Value = serde_json::from_str(trimmed)
        .map_err(|e| DecodeError { offset: e.column().saturating_sub(1), reason: e.to_string() })?;
    let fail = |reason: &str| Err(DecodeError { offset: 0, reason: reason.to_string() });
    // a set type would silently swallow repeated entries, so check the raw
    // array before the typed parse
    if let Some(entries) = raw.get("visited").and_then(|v| v.as_array()) {
        let mut seen = BTreeSet::new();
        if entries.iter().any(|v| v.as_str().is_some_and(|s| !seen.insert(s))) {
            return fail("duplicate entry in visited set");
        }
    }
    let msg: FederationMessage = serde_json::from_value(raw)
        .map_err(|e| DecodeError { offset: 0, reason: e.to_string() })?;
    let (msg_id, from, to) = match &msg {
        FederationMessage::MatchRequest { msg_id, from, to, .. }
        | FederationMessage::MatchResponse { msg_id, from, to, .. }
        | FederationMessage::NoMatch { msg_id, from, to, .. } => (msg_id, from, to),
    };
    if msg_id.is_empty() {
        return fail("empty msg_id");
    }
    if from == to {
        return fail("sender and target are the same center");
    }
    if let FederationMessage::MatchRequest { from, to, visited, .. } = &msg {
        if !visited.contains(from) {
            return fail("request sender missing from its own visited set");
        }
        if visited.contains(to) {
            return fail("request targets an already-visited center");
        }
    }
    Ok(msg)
}

// --- routing ---------------------------------------------------------------

/// Directed links that silently lose frames, for fault injection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub drop_links: BTreeSet<(CcId, CcId)>,
}

impl FaultPlan {
    pub fn drops(&self, from: &CcId, to: &CcId) -> bool {
        self.drop_links.contains(&(from.clone(), to.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    #[serde(rename = "MATCH_REQUEST")]
    MatchRequest,
    #[serde(rename = "MATCH_RESPONSE")]
    MatchResponse,
    #[serde(rename = "NO_MATCH")]
    NoMatch,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MatchRequest => "MATCH_REQUEST",
            Self::MatchResponse => "MATCH_RESPONSE",
            Self::NoMatch => "NO_MATCH",
        }
    }
}

/// One observed protocol exchange, for run logs and metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub at: Minutes,
    pub kind: MessageKind,
    pub from: CcId,
    pub to: CcId,
    pub request_id: String,
    /// hop budget carried by a request frame
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hops_remaining: Option<u32>,
    /// candidate count carried by a response frame
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<usize>,
    pub dropped: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FederationError {
    #[error("unknown coordination center '{0}'")]
    UnknownCc(CcId),
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// Result of resolving one request through the federation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolveOutcome {
    /// CC whose registry holds the candidates; `None` when nothing matched
    pub responder: Option<CcId>,
    pub candidates: Vec<MatchCandidate>,
    /// true when the origin answered out of its own registry
    pub local: bool,
}

/// Resolves a request starting at `origin` with an empty visited set.
#[allow(clippy::too_many_arguments)]
pub fn resolve_request(
    fed: &Federation,
    kb: &KnowledgeBase,
    origin: &CcId,
    request: &ServiceRequest,
    config: MatchConfig,
    hop_limit: u32,
    faults: &FaultPlan,
    at: Minutes,
    log: &mut Vec<MessageRecord>,
) -> Result<ResolveOutcome, FederationError> {
    let mut visited = BTreeSet::new();
    let found =
        resolve_seeded(fed, kb, origin, request, config, hop_limit, &mut visited, faults, at, log)?;
    Ok(match found {
        Some((responder, candidates)) => {
            let local = &responder == origin;
            ResolveOutcome { responder: Some(responder), candidates, local }
        }
        None => ResolveOutcome { responder: None, candidates: Vec::new(), local: false },
    })
}

/// Core routing step: handles the request at `cc_id`, forwarding on a local
/// miss. `visited` accumulates across sibling branches, which is what keeps
/// any CC from being asked twice. Returns the responder and its candidates.
#[allow(clippy::too_many_arguments)]
pub fn resolve_seeded(
    fed: &Federation,
    kb: &KnowledgeBase,
    cc_id: &CcId,
    request: &ServiceRequest,
    config: MatchConfig,
    hops_remaining: u32,
    visited: &mut BTreeSet<CcId>,
    faults: &FaultPlan,
    at: Minutes,
    log: &mut Vec<MessageRecord>,
) -> Result<Option<(CcId, Vec<MatchCandidate>)>, FederationError> {
    visited.insert(cc_id.clone());
    let cc = fed.get(cc_id).ok_or_else(|| FederationError::UnknownCc(cc_id.clone()))?;

    let candidates = match_request(kb, &cc.registry, request, config)?;
    if !candidates.is_empty() {
        return Ok(Some((cc_id.clone(), candidates)));
    }
    if hops_remaining == 0 {
        return Ok(None);
    }

    // houses escalate to their community; communities fan out to peers in
    // lexicographic order, one at a time
    let targets: Vec<CcId> = match cc.config.kind {
        CcKind::House => cc.config.parent.iter().cloned().collect(),
        CcKind::Community => cc.config.peers.iter().cloned().collect(),
    };

    for target in targets {
        if visited.contains(&target) {
            continue;
        }
        let request_dropped = faults.drops(cc_id, &target);
        log.push(MessageRecord {
            at,
            kind: MessageKind::MatchRequest,
            from: cc_id.clone(),
            to: target.clone(),
            request_id: request.id.clone(),
            hops_remaining: Some(hops_remaining - 1),
            candidates: None,
            dropped: request_dropped,
        });
        if request_dropped {
            // the peer never saw the request; mark it exhausted so we do not
            // retry it through another branch of this same resolution
            visited.insert(target);
            continue;
        }

        let found = resolve_seeded(
            fed,
            kb,
            &target,
            request,
            config,
            hops_remaining - 1,
            visited,
            faults,
            at,
            log,
        )?;
        let response_dropped = faults.drops(&target, cc_id);
        match found {
            Some((responder, candidates)) => {
                log.push(MessageRecord {
                    at,
                    kind: MessageKind::MatchResponse,
                    from: target.clone(),
                    to: cc_id.clone(),
                    request_id: request.id.clone(),
                    hops_remaining: None,
                    candidates: Some(candidates.len()),
                    dropped: response_dropped,
                });
                if !response_dropped {
                    return Ok(Some((responder, candidates)));
                }
                // answer lost in transit: the branch is spent, keep going
            }
            None => {
                log.push(MessageRecord {
                    at,
                    kind: MessageKind::NoMatch,
                    from: target.clone(),
                    to: cc_id.clone(),
                    request_id: request.id.clone(),
                    hops_remaining: None,
                    candidates: None,
                    dropped: response_dropped,
                });
            }
        }
    }
    Ok(None)
}
