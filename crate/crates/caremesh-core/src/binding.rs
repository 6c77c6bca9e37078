//! Contract binding and lifecycle.
//!
//! A scheduler selection is turned into an ACTIVE contract between requester
//! and provider. Contracts move through exactly one terminal transition:
//! completed, cancelled, or preempted. Every transition appends to an
//! append-only, time-ordered audit trail, and preemptions cross-reference
//! the two contracts involved. Binding a device-backed offer additionally
//! yields an invocation reference carrying the device endpoint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptions::{ProviderType, ServiceRequest};
use crate::kb::ConceptId;
use crate::matcher::MatchDegree;
use crate::scheduler::Selection;
use crate::units::{Minutes, TimeInterval};

pub fn contract_id_for(seq: u64) -> String {
    format!("c-{seq:04}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ContractStatus {
    Active,
    Completed,
    Cancelled,
    Preempted,
}

impl ContractStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Active => "ACTIVE",
            Self::Completed => "COMPLETED",
            Self::Cancelled => "CANCELLED",
            Self::Preempted => "PREEMPTED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CancelReason {
    Requester,
    ProviderUnregistered,
    Shutdown,
}

impl CancelReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Requester => "requester",
            Self::ProviderUnregistered => "provider_unregistered",
            Self::Shutdown => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: Minutes,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub seq: u64,
    pub contract_id: String,
    pub created_at: Minutes,
    /// full snapshot of the request this contract serves
    pub request: ServiceRequest,
    /// coordination center the request entered at
    pub origin_cc: String,
    /// coordination center whose registry holds the record; record ids are
    /// only unique within one center
    pub cc: String,
    pub record_id: String,
    pub provider: String,
    pub provider_type: ProviderType,
    pub concept: ConceptId,
    pub degree: MatchDegree,
    pub score: f64,
    pub interval: TimeInterval,
    pub price: i64,
    pub status: ContractStatus,
    pub audit: Vec<AuditEntry>,
}

/// Handle for invoking a bound device; only device contracts produce one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationRef {
    pub contract_id: String,
    pub endpoint: String,
    pub issued_at: Minutes,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("unknown contract '{0}'")]
    UnknownContract(String),
    #[error("contract '{contract_id}' is {from} and cannot change state")]
    InvalidTransition { contract_id: String, from: &'static str },
    #[error("audit time for contract '{contract_id}' would go backwards")]
    TimeRegression { contract_id: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractStore {
    contracts: BTreeMap<u64, Contract>,
    next_seq: u64,
}

impl ContractStore {
    pub fn new() -> Self {
        Self { contracts: BTreeMap::new(), next_seq: 1 }
    }

    pub fn get(&self, contract_id: &str) -> Option<&Contract> {
        self.contracts.values().find(|c| c.contract_id == contract_id)
    }

    /// Contracts in creation order.
    pub fn contracts(&self) -> impl Iterator<Item = &Contract> {
        self.contracts.values()
    }

    /// Creates an ACTIVE contract from a scheduler selection. Device-backed
    /// contracts also return the invocation reference for the runner to hand
    /// to the requester.
    pub fn bind(
        &mut self,
        request: &ServiceRequest,
        selection: &Selection,
        origin_cc: &str,
        cc: &str,
        now: Minutes,
    ) -> (Contract, Option<InvocationRef>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let contract_id = contract_id_for(seq);
        let offer = &selection.candidate.record.offer;
        let contract = Contract {
            seq,
            contract_id: contract_id.clone(),
            created_at: now,
            request: request.clone(),
            origin_cc: origin_cc.to_string(),
            cc: cc.to_string(),
            record_id: selection.candidate.record.record_id.clone(),
            provider: offer.provider.clone(),
            provider_type: offer.provider_type,
            concept: offer.concept.clone(),
            degree: selection.candidate.degree,
            score: selection.score,
            interval: selection.interval,
            price: offer.price,
            status: ContractStatus::Active,
            audit: vec![AuditEntry {
                at: now,
                note: format!(
                    "bound request {} to {} ({})",
                    request.id, selection.candidate.record.record_id, offer.provider
                ),
            }],
        };
        let invocation = match (&offer.provider_type, &offer.invocation_endpoint) {
            (ProviderType::Device, Some(endpoint)) => Some(InvocationRef {
                contract_id: contract_id.clone(),
                endpoint: endpoint.clone(),
                issued_at: now,
            }),
            _ => None,
        };
        self.contracts.insert(seq, contract.clone());
        (contract, invocation)
    }

    fn transition(
        &mut self,
        contract_id: &str,
        now: Minutes,
        to: ContractStatus,
        note: String,
    ) -> Result<&Contract, ContractError> {
        let seq = self
            .contracts
            .values()
            .find(|c| c.contract_id == contract_id)
            .map(|c| c.seq)
            .ok_or_else(|| ContractError::UnknownContract(contract_id.to_string()))?;
        let contract = self.contracts.get_mut(&seq).expect("seq just resolved");
        if contract.status != ContractStatus::Active {
            return Err(ContractError::InvalidTransition {
                contract_id: contract_id.to_string(),
                from: contract.status.as_str(),
            });
        }
        if contract.audit.last().is_some_and(|a| a.at > now) {
            return Err(ContractError::TimeRegression { contract_id: contract_id.to_string() });
        }
        contract.status = to;
        contract.audit.push(AuditEntry { at: now, note });
        Ok(&*contract)
    }

    pub fn complete(
        &mut self,
        contract_id: &str,
        now: Minutes,
    ) -> Result<&Contract, ContractError> {
        self.transition(contract_id, now, ContractStatus::Completed, "completed".into())
    }

    pub fn cancel(
        &mut self,
        contract_id: &str,
        reason: CancelReason,
        now: Minutes,
    ) -> Result<&Contract, ContractError> {
        self.transition(
            contract_id,
            now,
            ContractStatus::Cancelled,
            format!("cancelled: {}", reason.as_str()),
        )
    }

    /// Marks `victim_id` preempted in favour of `preemptor_id`, writing the
    /// cross-reference into both audit trails.
    pub fn preempt(
        &mut self,
        victim_id: &str,
        preemptor_id: &str,
        now: Minutes,
    ) -> Result<(), ContractError> {
        if self.get(preemptor_id).is_none() {
            return Err(ContractError::UnknownContract(preemptor_id.to_string()));
        }
        self.transition(
            victim_id,
            now,
            ContractStatus::Preempted,
            format!("preempted by {preemptor_id}"),
        )?;
        let preemptor = self
            .contracts
            .values_mut()
            .find(|c| c.contract_id == preemptor_id)
            .expect("preemptor checked above");
        if preemptor.audit.last().is_some_and(|a| a.at > now) {
            return Err(ContractError::TimeRegression { contract_id: preemptor_id.to_string() });
        }
        preemptor.audit.push(AuditEntry { at: now, note: format!("preempts {victim_id}") });
        Ok(())
    }
}
