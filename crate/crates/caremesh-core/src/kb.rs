//! Ontology knowledge base: concept DAGs under Is-a plus fulfillment rules.
//!
//! The KB is the reasoning substrate for the matcher. It is an immutable
//! snapshot value: every successful mutation returns a new snapshot with a
//! strictly larger version, so readers can keep querying an old snapshot
//! while a writer prepares the next one. Queries are pure.
//!
//! Two relations are answered here:
//!
//! * subsumption: `a` is a sub-concept of `b` when `b` is reachable from `a`
//!   along Is-a edges (reflexive-transitive closure);
//! * fulfillment: an offer concept fulfills a request concept when some rule
//!   `(provider, request)` covers the pair, closed under specialization on
//!   both sides.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Case-normalized concept identifier. Lowercase token, unique within a KB.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl TryFrom<String> for ConceptId {
    type Error = KbError;

    fn try_from(raw: String) -> Result<Self, Self::Error> {
        Self::new(&raw)
    }
}

impl From<ConceptId> for String {
    fn from(id: ConceptId) -> String {
        id.0
    }
}

impl ConceptId {
    /// Normalizes to a lowercase token. Rejects empty ids and ids with
    /// embedded whitespace; label matching elsewhere is by id, never fuzzy.
    pub fn new(raw: &str) -> Result<Self, KbError> {
        let id = raw.trim().to_lowercase();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(KbError::InvalidId { id: raw.to_string() });
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ConceptId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concept {
    pub id: ConceptId,
    pub label: String,
    /// Sub-domain tag (housing, transportation, nursing, ...). Edges may
    /// cross domains; the graph is one DAG partitioned by this tag.
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IsaEdge {
    pub child: ConceptId,
    pub parent: ConceptId,
}

/// Asserted capability link: offers of `provider_concept` can satisfy
/// requests of `request_concept`. Closed under Is-a specialization on both
/// sides when queried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FulfillmentRule {
    pub provider_concept: ConceptId,
    pub request_concept: ConceptId,
    pub rationale: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KbError {
    #[error("invalid concept id {id:?}")]
    InvalidId { id: String },
    #[error("unknown id '{id}'")]
    UnknownId { id: String },
    #[error("duplicate id '{id}'")]
    DuplicateId { id: String },
    #[error("adding edge {child} is-a {parent} would create a cycle")]
    CycleDetected { child: ConceptId, parent: ConceptId },
    #[error("concept '{id}' is still referenced by {referenced_by}")]
    ConceptInUse { id: ConceptId, referenced_by: String },
}

/// One KB mutation, applied atomically by [`KnowledgeBase::mutate`].
#[derive(Debug, Clone)]
pub enum KbMutation {
    AddConcept(Concept),
    RemoveConcept(ConceptId),
    AddIsa(IsaEdge),
    RemoveIsa(IsaEdge),
    AddRule(FulfillmentRule),
    RemoveRule { provider: ConceptId, request: ConceptId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    concepts: BTreeMap<ConceptId, Concept>,
    /// child -> direct parents
    parents: BTreeMap<ConceptId, BTreeSet<ConceptId>>,
    /// keyed by (provider_concept, request_concept); value is the rationale
    rules: BTreeMap<(ConceptId, ConceptId), String>,
    version: u64,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self { version: 1, ..Self::default() }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn isa_edges(&self) -> Vec<IsaEdge> {
        self.parents
            .iter()
            .flat_map(|(child, parents)| {
                parents
                    .iter()
                    .map(|parent| IsaEdge { child: child.clone(), parent: parent.clone() })
            })
            .collect()
    }

    pub fn rules(&self) -> impl Iterator<Item = FulfillmentRule> + '_ {
        self.rules.iter().map(|((provider, request), rationale)| FulfillmentRule {
            provider_concept: provider.clone(),
            request_concept: request.clone(),
            rationale: rationale.clone(),
        })
    }

    /// Resolves a raw string to a known concept id (case-normalized lookup).
    pub fn resolve(&self, raw: &str) -> Result<ConceptId, KbError> {
        let id = ConceptId::new(raw)?;
        if self.contains(&id) {
            Ok(id)
        } else {
            Err(KbError::UnknownId { id: id.0 })
        }
    }

    fn require(&self, id: &ConceptId) -> Result<(), KbError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(KbError::UnknownId { id: id.0.clone() })
        }
    }

    /// Applies one mutation, producing the next snapshot. The receiver is
    /// untouched on error, so a failed mutation leaves version and content
    /// unchanged. `RemoveConcept` checks edges and rules only; callers that
    /// track live registry records should use [`Self::mutate_with_ref_check`].
    pub fn mutate(&self, op: KbMutation) -> Result<KnowledgeBase, KbError> {
        self.mutate_with_ref_check(op, |_| false)
    }

    /// Like [`Self::mutate`], with an external liveness check consulted on
    /// `RemoveConcept` (e.g. "is some registry record still using this id").
    pub fn mutate_with_ref_check<F>(
        &self,
        op: KbMutation,
        in_use: F,
    ) -> Result<KnowledgeBase, KbError>
    where
        F: Fn(&ConceptId) -> bool,
    {
        let mut next = self.clone();
        match op {
            KbMutation::AddConcept(concept) => {
                if next.concepts.contains_key(&concept.id) {
                    return Err(KbError::DuplicateId { id: concept.id.0.clone() });
                }
                next.concepts.insert(concept.id.clone(), concept);
            }
            KbMutation::RemoveConcept(id) => {
                self.require(&id)?;
                let in_edge =
                    self.parents.iter().any(|(child, ps)| *child == id || ps.contains(&id));
                if in_edge {
                    return Err(KbError::ConceptInUse { id, referenced_by: "is-a edges".into() });
                }
                let in_rule = self.rules.keys().any(|(p, r)| *p == id || *r == id);
                if in_rule {
                    return Err(KbError::ConceptInUse {
                        id,
                        referenced_by: "fulfillment rules".into(),
                    });
                }
                if in_use(&id) {
                    return Err(KbError::ConceptInUse {
                        id,
                        referenced_by: "registry records".into(),
                    });
                }
                next.concepts.remove(&id);
            }
            KbMutation::AddIsa(edge) => {
                self.require(&edge.child)?;
                self.require(&edge.parent)?;
                // A new child -> parent edge closes a cycle exactly when the
                // parent already reaches the child (covers self-loops).
                if self.is_subconcept(&edge.parent, &edge.child)? {
                    return Err(KbError::CycleDetected { child: edge.child, parent: edge.parent });
                }
                next.parents.entry(edge.child).or_default().insert(edge.parent);
            }
            KbMutation::RemoveIsa(edge) => {
                let present =
                    self.parents.get(&edge.child).is_some_and(|ps| ps.contains(&edge.parent));
                if !present {
                    return Err(KbError::UnknownId {
                        id: format!("{} is-a {}", edge.child, edge.parent),
                    });
                }
                let ps = next.parents.get_mut(&edge.child).expect("edge present");
                ps.remove(&edge.parent);
                if ps.is_empty() {
                    next.parents.remove(&edge.child);
                }
            }
            KbMutation::AddRule(rule) => {
                self.require(&rule.provider_concept)?;
                self.require(&rule.request_concept)?;
                next.rules.insert((rule.provider_concept, rule.request_concept), rule.rationale);
            }
            KbMutation::RemoveRule { provider, request } => {
                if next.rules.remove(&(provider.clone(), request.clone())).is_none() {
                    return Err(KbError::UnknownId { id: format!("rule ({provider}, {request})") });
                }
            }
        }
        next.version = self.version + 1;
        Ok(next)
    }

    /// True iff `a == b` or `b` is reachable from `a` along Is-a edges.
    pub fn is_subconcept(&self, a: &ConceptId, b: &ConceptId) -> Result<bool, KbError> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Ok(true);
        }
        let mut seen: BTreeSet<&ConceptId> = BTreeSet::new();
        let mut queue: VecDeque<&ConceptId> = VecDeque::from([a]);
        while let Some(cur) = queue.pop_front() {
            if let Some(ps) = self.parents.get(cur) {
                for p in ps {
                    if p == b {
                        return Ok(true);
                    }
                    if seen.insert(p) {
                        queue.push_back(p);
                    }
                }
            }
        }
        Ok(false)
    }

    /// Shortest Is-a path length from `a` up to `b`; `Some(0)` iff `a == b`,
    /// `None` iff `b` is not reachable from `a`.
    pub fn isa_distance(&self, a: &ConceptId, b: &ConceptId) -> Result<Option<u32>, KbError> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Ok(Some(0));
        }
        let mut dist: BTreeMap<&ConceptId, u32> = BTreeMap::from([(a, 0)]);
        let mut queue: VecDeque<&ConceptId> = VecDeque::from([a]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur];
            if let Some(ps) = self.parents.get(cur) {
                for p in ps {
                    if p == b {
                        return Ok(Some(d + 1));
                    }
                    if !dist.contains_key(p) {
                        dist.insert(p, d + 1);
                        queue.push_back(p);
                    }
                }
            }
        }
        Ok(None)
    }

    /// True iff some rule `(p, r)` exists with `provider_c ⊑ p` and
    /// `request_c ⊑ r`.
    pub fn derive_fulfills(
        &self,
        provider_c: &ConceptId,
        request_c: &ConceptId,
    ) -> Result<bool, KbError> {
        self.require(provider_c)?;
        self.require(request_c)?;
        for (p, r) in self.rules.keys() {
            if self.is_subconcept(provider_c, p)? && self.is_subconcept(request_c, r)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

// --- ontology definition files -------------------------------------------

/// Serde mirror of the ontology definition file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    /// free-text modeling notes; carried by the file but not interpreted
    #[serde(default)]
    notes: Vec<String>,
    concepts: Vec<ConceptEntry>,
    #[serde(default)]
    isa: Vec<IsaEntry>,
    #[serde(default)]
    rules: Vec<RuleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptEntry {
    id: String,
    label: String,
    domain: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IsaEntry {
    child: String,
    parent: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    provider: String,
    request: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Error)]
pub enum OntologyLoadError {
    #[error("ontology parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Invalid { path: String, source: KbError },
}

/// Parses and validates an ontology definition. Errors are qualified with the
/// JSON path of the offending entry.
pub fn parse_ontology(json: &str) -> Result<KnowledgeBase, OntologyLoadError> {
    let file: OntologyFile = serde_json::from_str(json)?;
    let mut kb = KnowledgeBase::new();
    let at = |section: &str, i: usize, source: KbError| OntologyLoadError::Invalid {
        path: format!("{section}[{i}]"),
        source,
    };
    for (i, c) in file.concepts.iter().enumerate() {
        let id = ConceptId::new(&c.id).map_err(|e| at("concepts", i, e))?;
        let domain = c.domain.trim().to_lowercase();
        if domain.is_empty() {
            return Err(at("concepts", i, KbError::InvalidId { id: c.domain.clone() }));
        }
        kb = kb
            .mutate(KbMutation::AddConcept(Concept { id, label: c.label.clone(), domain }))
            .map_err(|e| at("concepts", i, e))?;
    }
    for (i, e) in file.isa.iter().enumerate() {
        let child = ConceptId::new(&e.child).map_err(|err| at("isa", i, err))?;
        let parent = ConceptId::new(&e.parent).map_err(|err| at("isa", i, err))?;
        kb = kb
            .mutate(KbMutation::AddIsa(IsaEdge { child, parent }))
            .map_err(|err| at("isa", i, err))?;
    }
    for (i, r) in file.rules.iter().enumerate() {
        let provider = ConceptId::new(&r.provider).map_err(|err| at("rules", i, err))?;
        let request = ConceptId::new(&r.request).map_err(|err| at("rules", i, err))?;
        kb = kb
            .mutate(KbMutation::AddRule(FulfillmentRule {
                provider_concept: provider,
                request_concept: request,
                rationale: r.rationale.clone(),
            }))
            .map_err(|err| at("rules", i, err))?;
    }
    Ok(kb)
}

/// Serializes a KB back to the ontology file form (sorted, canonical).
pub fn ontology_to_json(kb: &KnowledgeBase) -> serde_json::Value {
    let file = OntologyFile {
        notes: Vec::new(),
        concepts: kb
            .concepts()
            .map(|c| ConceptEntry {
                id: c.id.as_str().to_string(),
                label: c.label.clone(),
                domain: c.domain.clone(),
            })
            .collect(),
        isa: kb
            .isa_edges()
            .into_iter()
            .map(|e| IsaEntry { child: e.child.as_str().into(), parent: e.parent.as_str().into() })
            .collect(),
        rules: kb
            .rules()
            .map(|r| RuleEntry {
                provider: r.provider_concept.as_str().into(),
                request: r.request_concept.as_str().into(),
                rationale: r.rationale,
            })
            .collect(),
    };
    serde_json::to_value(file).expect("ontology serializes")
}
