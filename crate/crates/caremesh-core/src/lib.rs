//! Federated service matchmaking for mutual assistance communities.
//!
//! Members of a community describe what they need and what they can offer;
//! this crate turns those descriptions into bookable agreements. A shared
//! concept hierarchy lets a request match an offer that is worded
//! differently, a preference-weighted scheduler picks the best feasible
//! provider and time slot, and a hierarchy of community coordinators
//! forwards requests that cannot be served locally.
//!
//! The crate is organized around the pipeline a request travels:
//!
//! - [`kb`]: the concept hierarchy and fulfillment rules, with versioned
//!   snapshot semantics
//! - [`descriptions`]: raw key-value descriptions from forms or device
//!   profiles, normalized into typed requests and offers
//! - [`registry`]: per-coordinator offer registries and the export table
//!   for standard industry codes
//! - [`matcher`]: graded concept matching from exact identity down to
//!   rule-based fulfillment
//! - [`scheduler`]: preference scoring, earliest-fit slot search, and
//!   priority preemption
//! - [`binding`]: contract records with audit trails and invocation
//!   references for device-backed services
//! - [`federation`]: coordinator topology, request forwarding, and the
//!   wire format used between coordinators
//! - [`scenario`]: scenario files that script a whole federation run
//! - [`runner`]: the deterministic replay engine producing logs and metrics
//! - [`gen`]: seeded random scenario generation
//!
//! Everything is deterministic by design: integer minutes instead of wall
//! clocks, ordered maps instead of hash maps, and explicit tie-breaking
//! wherever candidates compare equal. Replaying the same scenario twice
//! yields byte-identical logs.

pub mod binding;
pub mod descriptions;
pub mod federation;
pub mod gen;
pub mod kb;
pub mod matcher;
pub mod registry;
pub mod runner;
pub mod scenario;
pub mod scheduler;
pub mod units;

pub use binding::{Contract, ContractStatus, ContractStore, InvocationRef};
pub use descriptions::{
    format_offer, format_request, FormatOptions, Priority, ProviderType, RawDescription,
    ServiceOffer, ServiceRequest,
};
pub use federation::{
    decode_message, encode_message, resolve_seeded, CcConfig, CcId, CcKind, FaultPlan, Federation,
    FederationMessage, TopologyError,
};
pub use kb::{parse_ontology, Concept, ConceptId, KnowledgeBase};
pub use matcher::{match_request, MatchCandidate, MatchConfig, MatchDegree};
pub use registry::{Registry, RegistryRecord, TaxonomyTable};
pub use runner::{run_scenario, Metrics, RunOptions, RunReport};
pub use scenario::{load_scenario, Scenario};
pub use scheduler::{score, select_with_preemption, Booking, BookingLedger, Selection};
pub use units::{GridPoint, Minutes, TimeInterval};
