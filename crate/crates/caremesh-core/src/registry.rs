//! Per-coordination-center service registry.
//!
//! Stores formatted offers under stable record ids, answers exact-concept
//! (syntactic) lookups, and can project records onto a flat taxonomy-code
//! table for legacy consumers that match on classification codes instead of
//! concepts. Dump/restore round-trips the whole registry through JSON so a
//! center can persist and reload its state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptions::ServiceOffer;
use crate::kb::ConceptId;
use crate::units::Minutes;

/// Record ids look like `r-0001`: a fixed prefix plus a zero-padded sequence
/// number. The numeric sequence, not the string, orders records, so ids keep
/// sorting correctly past `r-9999`.
pub fn record_id_for(seq: u64) -> String {
    format!("r-{seq:04}")
}

fn seq_of(record_id: &str) -> Option<u64> {
    record_id.strip_prefix("r-")?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub record_id: String,
    pub offer: ServiceOffer,
    pub registered_at: Minutes,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("unknown record '{0}'")]
    UnknownRecord(String),
    #[error("registry dump is invalid: {0}")]
    BadDump(String),
}

/// The registry proper. Records are kept keyed by their numeric sequence so
/// iteration follows registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    records: BTreeMap<u64, RegistryRecord>,
    next_seq: u64,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self { records: BTreeMap::new(), next_seq: 1 }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Registers an offer and returns the stored record. Ids are never
    /// reused, even after unregistration.
    pub fn register(&mut self, offer: ServiceOffer, now: Minutes) -> RegistryRecord {
        let seq = self.next_seq;
        self.next_seq += 1;
        let record = RegistryRecord { record_id: record_id_for(seq), offer, registered_at: now };
        self.records.insert(seq, record.clone());
        record
    }

    pub fn unregister(&mut self, record_id: &str) -> Result<RegistryRecord, RegistryError> {
        let seq =
            seq_of(record_id).ok_or_else(|| RegistryError::UnknownRecord(record_id.to_string()))?;
        self.records.remove(&seq).ok_or_else(|| RegistryError::UnknownRecord(record_id.to_string()))
    }

    pub fn get(&self, record_id: &str) -> Option<&RegistryRecord> {
        self.records.get(&seq_of(record_id)?)
    }

    /// All live records in registration order.
    pub fn all_records(&self) -> impl Iterator<Item = &RegistryRecord> {
        self.records.values()
    }

    /// Exact-concept lookup: no reasoning, plain identifier equality. This is
    /// what a purely syntactic directory would answer.
    pub fn lookup_syntactic(&self, concept: &ConceptId) -> Vec<&RegistryRecord> {
        self.records.values().filter(|r| &r.offer.concept == concept).collect()
    }

    /// First live record for a provider/concept pair, in registration order.
    /// Used to resolve unregistrations that name the provider instead of the
    /// record id.
    pub fn find_by_provider(&self, provider: &str, concept: &ConceptId) -> Option<&RegistryRecord> {
        self.records.values().find(|r| r.offer.provider == provider && &r.offer.concept == concept)
    }

    /// Serializes every record, in order, as a JSON array.
    pub fn dump(&self) -> String {
        let records: Vec<&RegistryRecord> = self.records.values().collect();
        serde_json::to_string_pretty(&records).expect("registry records serialize")
    }

    /// Rebuilds a registry from [`Registry::dump`] output. The sequence
    /// counter resumes past the highest restored id.
    pub fn restore(json: &str) -> Result<Self, RegistryError> {
        let records: Vec<RegistryRecord> =
            serde_json::from_str(json).map_err(|e| RegistryError::BadDump(e.to_string()))?;
        let mut map = BTreeMap::new();
        let mut max_seq = 0;
        for record in records {
            let seq = seq_of(&record.record_id).ok_or_else(|| {
                RegistryError::BadDump(format!("bad record id '{}'", record.record_id))
            })?;
            if map.insert(seq, record).is_some() {
                return Err(RegistryError::BadDump(format!("duplicate record id r-{seq:04}")));
            }
            max_seq = max_seq.max(seq);
        }
        Ok(Self { records: map, next_seq: max_seq + 1 })
    }
}

/// Maps concept ids to flat classification codes. The `_fallback` entry, if
/// present, catches concepts without their own code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaxonomyTable {
    pub codes: BTreeMap<String, String>,
}

pub const TAXONOMY_FALLBACK_KEY: &str = "_fallback";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("no taxonomy code for concept '{0}' and no fallback")]
    NoCode(String),
}

impl TaxonomyTable {
    pub fn code_for(&self, concept: &ConceptId) -> Result<&str, TaxonomyError> {
        self.codes
            .get(concept.as_str())
            .or_else(|| self.codes.get(TAXONOMY_FALLBACK_KEY))
            .map(String::as_str)
            .ok_or_else(|| TaxonomyError::NoCode(concept.to_string()))
    }
}

/// Projects a record onto a flat key/value descriptor keyed by taxonomy code,
/// the shape legacy code-matching directories expect. The original concept
/// rides along under `service_type` so the projection stays re-importable.
pub fn export_taxonomy_record(
    record: &RegistryRecord,
    taxonomy: &TaxonomyTable,
) -> Result<BTreeMap<String, String>, TaxonomyError> {
    let code = taxonomy.code_for(&record.offer.concept)?;
    let mut out = record.offer.to_raw().fields;
    out.insert("code".into(), code.to_string());
    out.insert("record_id".into(), record.record_id.clone());
    Ok(out)
}
