//! Graded semantic matchmaking.
//!
//! A request concept is compared against each registered offer concept and
//! classified by how it fulfills the need:
//!
//! * `EXACT`: identical concepts.
//! * `SUBSUMING(h)`: the offer is `h` Is-a hops more general than the
//!   request, so the capability covers the need (a gardener can water
//!   flowers).
//! * `RULE`: a fulfillment rule in the KB bridges otherwise unrelated
//!   concepts (a text display can deliver a reminder).
//! * `NARROWER(h)`: the offer is more specific than the request; a partial
//!   answer, disabled unless explicitly allowed.
//!
//! Degrees order `EXACT` above `SUBSUMING` above `RULE` above `NARROWER`,
//! with fewer hops ranking higher inside a band. On top of the functional
//! comparison, hard constraints (price cap, quality floor, provider types,
//! distance cap) filter candidates out entirely; soft preferences are the
//! scheduler's business.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::descriptions::{ServiceOffer, ServiceRequest};
use crate::kb::{ConceptId, KbError, KnowledgeBase};
use crate::registry::{Registry, RegistryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchDegree {
    Exact,
    Subsuming { hops: u32 },
    Rule,
    Narrower { hops: u32 },
}

impl MatchDegree {
    fn band(&self) -> u8 {
        match self {
            Self::Exact => 3,
            Self::Subsuming { .. } => 2,
            Self::Rule => 1,
            Self::Narrower { .. } => 0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Exact => "EXACT",
            Self::Subsuming { .. } => "SUBSUMING",
            Self::Rule => "RULE",
            Self::Narrower { .. } => "NARROWER",
        }
    }

    /// Is-a hops between the concepts, where that is meaningful.
    pub fn hops(&self) -> Option<u32> {
        match self {
            Self::Subsuming { hops } | Self::Narrower { hops } => Some(*hops),
            _ => None,
        }
    }
}

impl Ord for MatchDegree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.band()
            .cmp(&other.band())
            // fewer hops is the better match within a band
            .then_with(|| other.hops().unwrap_or(0).cmp(&self.hops().unwrap_or(0)))
    }
}

impl PartialOrd for MatchDegree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MatchDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => write!(f, "EXACT"),
            Self::Subsuming { hops } => write!(f, "SUBSUMING({hops})"),
            Self::Rule => write!(f, "RULE"),
            Self::Narrower { hops } => write!(f, "NARROWER({hops})"),
        }
    }
}

impl FromStr for MatchDegree {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_hops = |inner: &str| {
            inner
                .strip_suffix(')')
                .and_then(|h| h.parse::<u32>().ok())
                .ok_or_else(|| format!("bad match degree '{s}'"))
        };
        if s == "EXACT" {
            Ok(Self::Exact)
        } else if s == "RULE" {
            Ok(Self::Rule)
        } else if let Some(inner) = s.strip_prefix("SUBSUMING(") {
            Ok(Self::Subsuming { hops: parse_hops(inner)? })
        } else if let Some(inner) = s.strip_prefix("NARROWER(") {
            Ok(Self::Narrower { hops: parse_hops(inner)? })
        } else {
            Err(format!("bad match degree '{s}'"))
        }
    }
}

impl Serialize for MatchDegree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MatchDegree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchConfig {
    /// Compare concept identifiers as opaque strings; no KB reasoning. This
    /// is the code-table baseline that semantic matching is measured against.
    pub syntactic_only: bool,
    /// Admit offers more specific than the request as lowest-band matches.
    pub allow_narrower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCandidate {
    pub record: RegistryRecord,
    pub degree: MatchDegree,
}

/// Orders zero-padded record ids numerically even across padding widths.
pub fn record_order_key(record_id: &str) -> (usize, String) {
    (record_id.len(), record_id.to_string())
}

/// Classifies how `offer` fulfills `request`, or `None` if it does not.
pub fn functional_match(
    kb: &KnowledgeBase,
    request: &ConceptId,
    offer: &ConceptId,
    config: MatchConfig,
) -> Result<Option<MatchDegree>, KbError> {
    if request == offer {
        // still validate the shared concept so a stale id cannot slip by
        if !config.syntactic_only && !kb.contains(request) {
            return Err(KbError::UnknownId { id: request.to_string() });
        }
        return Ok(Some(MatchDegree::Exact));
    }
    if config.syntactic_only {
        return Ok(None);
    }
    if kb.is_subconcept(request, offer)? {
        let hops =
            kb.isa_distance(request, offer)?.expect("subconcept implies a finite Is-a distance");
        return Ok(Some(MatchDegree::Subsuming { hops }));
    }
    if kb.derive_fulfills(offer, request)? {
        return Ok(Some(MatchDegree::Rule));
    }
    if config.allow_narrower && kb.is_subconcept(offer, request)? {
        let hops =
            kb.isa_distance(offer, request)?.expect("subconcept implies a finite Is-a distance");
        return Ok(Some(MatchDegree::Narrower { hops }));
    }
    Ok(None)
}

/// Hard constraint check; any failure removes the offer from consideration.
pub fn satisfies_constraints(request: &ServiceRequest, offer: &ServiceOffer) -> bool {
    let c = &request.constraints;
    if !c.allowed_provider_types.contains(&offer.provider_type) {
        return false;
    }
    if let Some(max_price) = c.max_price {
        if offer.price > max_price {
            return false;
        }
    }
    if let Some(min_quality) = c.min_quality {
        if offer.quality < min_quality {
            return false;
        }
    }
    if let Some(max_distance) = c.max_distance {
        if request.location.distance(&offer.location) > max_distance {
            return false;
        }
    }
    true
}

/// Runs the request against one registry: functional classification first,
/// then constraint filtering. Candidates come back sorted best-first, ties
/// broken by record id.
pub fn match_request(
    kb: &KnowledgeBase,
    registry: &Registry,
    request: &ServiceRequest,
    config: MatchConfig,
) -> Result<Vec<MatchCandidate>, KbError> {
    let mut out = Vec::new();
    for record in registry.all_records() {
        let degree = functional_match(kb, &request.concept, &record.offer.concept, config)?;
        if let Some(degree) = degree {
            if satisfies_constraints(request, &record.offer) {
                out.push(MatchCandidate { record: record.clone(), degree });
            }
        }
    }
    out.sort_by(|a, b| {
        b.degree.cmp(&a.degree).then_with(|| {
            record_order_key(&a.record.record_id).cmp(&record_order_key(&b.record.record_id))
        })
    });
    Ok(out)
}
