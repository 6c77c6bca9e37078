//! Seeded random instance builders plus independent oracles for the property
//! suites. Everything derives from a `ChaCha8Rng` seed, so any failure
//! reproduces exactly.
//!
//! The oracles here deliberately share no code with the library: reachability
//! is a Floyd-Warshall closure over index pairs and hop counts come from a
//! plain breadth-first search over adjacency lists.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use caremesh_core::descriptions::{Constraints, PreferenceWeights};
use caremesh_core::kb::{Concept, FulfillmentRule, IsaEdge, KbMutation};
use caremesh_core::{
    CcConfig, CcId, CcKind, ConceptId, Federation, GridPoint, KnowledgeBase, Priority,
    ProviderType, Registry, ServiceOffer, ServiceRequest, TimeInterval,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Path to a bundled scenario under `scenarios/` at the workspace root.
pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

// --- random knowledge bases ------------------------------------------------

/// A random Is-a DAG plus fulfillment rules. Every edge points from a higher
/// concept index (child) to a lower one (parent), so acyclicity holds by
/// construction and the library's cycle check never interferes with
/// generation.
pub struct RandomKb {
    pub kb: KnowledgeBase,
    pub concepts: Vec<ConceptId>,
    /// (child index, parent index) pairs
    pub edges: BTreeSet<(usize, usize)>,
    /// (provider index, request index) pairs
    pub rules: BTreeSet<(usize, usize)>,
}

pub fn random_kb(
    rng: &mut ChaCha8Rng,
    max_concepts: usize,
    max_edges: usize,
    max_rules: usize,
) -> RandomKb {
    let n = rng.gen_range(2..=max_concepts);
    let mut kb = KnowledgeBase::new();
    let mut concepts = Vec::with_capacity(n);
    for i in 0..n {
        let id = ConceptId::new(&format!("c-{i:02}")).unwrap();
        kb = kb
            .mutate(KbMutation::AddConcept(Concept {
                id: id.clone(),
                label: format!("concept {i}"),
                domain: "fuzz".into(),
            }))
            .unwrap();
        concepts.push(id);
    }
    let mut edges = BTreeSet::new();
    for _ in 0..rng.gen_range(0..=max_edges) {
        let child = rng.gen_range(1..n);
        let parent = rng.gen_range(0..child);
        if edges.insert((child, parent)) {
            kb = kb
                .mutate(KbMutation::AddIsa(IsaEdge {
                    child: concepts[child].clone(),
                    parent: concepts[parent].clone(),
                }))
                .unwrap();
        }
    }
    let mut rules = BTreeSet::new();
    for _ in 0..rng.gen_range(0..=max_rules) {
        let provider = rng.gen_range(0..n);
        let request = rng.gen_range(0..n);
        if provider != request && rules.insert((provider, request)) {
            kb = kb
                .mutate(KbMutation::AddRule(FulfillmentRule {
                    provider_concept: concepts[provider].clone(),
                    request_concept: concepts[request].clone(),
                    rationale: "generated for property testing".into(),
                }))
                .unwrap();
        }
    }
    RandomKb { kb, concepts, edges, rules }
}

/// Reflexive-transitive reachability matrix over child -> parent edges,
/// computed Floyd-Warshall style. `closure[i][j]` holds when concept `i`
/// specializes concept `j`.
pub fn reachability_closure(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(child, parent) in edges {
        m[child][parent] = true;
    }
    for k in 0..n {
        let via = m[k].clone();
        for row in m.iter_mut() {
            if !row[k] {
                continue;
            }
            for (j, &reachable) in via.iter().enumerate() {
                if reachable {
                    row[j] = true;
                }
            }
        }
    }
    m
}

/// All-pairs minimum hop counts along child -> parent edges via breadth-first
/// search from every node. `hops[i][j]` is `None` when `j` is unreachable
/// from `i`.
pub fn bfs_hops(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<Option<u32>>> {
    let mut parents = vec![Vec::new(); n];
    for &(child, parent) in edges {
        parents[child].push(parent);
    }
    let mut all = vec![vec![None; n]; n];
    for (start, row) in all.iter_mut().enumerate() {
        row[start] = Some(0);
        let mut frontier = vec![start];
        let mut depth = 0u32;
        while !frontier.is_empty() {
            depth += 1;
            let mut next = Vec::new();
            for &node in &frontier {
                for &p in &parents[node] {
                    if row[p].is_none() {
                        row[p] = Some(depth);
                        next.push(p);
                    }
                }
            }
            frontier = next;
        }
    }
    all
}

// --- random offers and requests --------------------------------------------

/// Sorted, disjoint availability runs inside one day.
pub fn random_availability(rng: &mut ChaCha8Rng) -> Vec<TimeInterval> {
    let mut runs = Vec::new();
    let mut cursor = rng.gen_range(0..=120);
    for _ in 0..rng.gen_range(1..=3) {
        let len = rng.gen_range(60..=480);
        if cursor + len > 1440 {
            break;
        }
        runs.push(TimeInterval::new(cursor, cursor + len).unwrap());
        cursor += len + rng.gen_range(30..=240);
    }
    if runs.is_empty() {
        runs.push(TimeInterval::new(0, 1440).unwrap());
    }
    runs
}

pub fn random_provider_type(rng: &mut ChaCha8Rng) -> ProviderType {
    match rng.gen_range(0..10) {
        0..=1 => ProviderType::Device,
        2..=4 => ProviderType::Professional,
        _ => ProviderType::Informal,
    }
}

pub fn random_offer(rng: &mut ChaCha8Rng, seq: usize, concept: &ConceptId) -> ServiceOffer {
    let provider = format!("p-{seq:02}");
    let provider_type = random_provider_type(rng);
    let invocation_endpoint = match provider_type {
        ProviderType::Device => Some(format!("local://{provider}")),
        _ => None,
    };
    ServiceOffer {
        id: format!("{provider}/{concept}"),
        provider,
        provider_type,
        concept: concept.clone(),
        price: rng.gen_range(0..=5000),
        quality: rng.gen_range(1..=5),
        availability: random_availability(rng),
        location: GridPoint::new(rng.gen_range(-10..=10), rng.gen_range(-10..=10)),
        capacity: rng.gen_range(1..=3),
        invocation_endpoint,
    }
}

pub fn random_priority(rng: &mut ChaCha8Rng) -> Priority {
    match rng.gen_range(0..10) {
        0..=5 => Priority::Routine,
        6..=7 => Priority::Elevated,
        _ => Priority::Emergency,
    }
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> PreferenceWeights {
    match rng.gen_range(0..4) {
        0 => PreferenceWeights::uniform(),
        1 => PreferenceWeights { w_quality: 0.5, w_price: 0.3, w_distance: 0.2 },
        2 => PreferenceWeights { w_quality: 0.0, w_price: 0.0, w_distance: 1.0 },
        _ => PreferenceWeights { w_quality: 0.4, w_price: 0.4, w_distance: 0.2 },
    }
}

pub fn random_constraints(rng: &mut ChaCha8Rng) -> Constraints {
    let mut constraints = Constraints::default();
    if rng.gen_bool(0.3) {
        constraints.max_price = Some(rng.gen_range(500..=6000));
    }
    if rng.gen_bool(0.25) {
        constraints.min_quality = Some(rng.gen_range(2..=5));
    }
    if rng.gen_bool(0.15) {
        let all = [ProviderType::Professional, ProviderType::Informal, ProviderType::Device];
        let keep = rng.gen_range(1..=3);
        constraints.allowed_provider_types = all.choose_multiple(rng, keep).copied().collect();
    }
    if rng.gen_bool(0.2) {
        constraints.max_distance = Some(rng.gen_range(5..=25) as f64);
    }
    constraints
}

pub fn random_request(rng: &mut ChaCha8Rng, concept: &ConceptId) -> ServiceRequest {
    let start = rng.gen_range(0..=1000);
    let len = rng.gen_range(60..=400);
    let window = TimeInterval::new(start, start + len).unwrap();
    ServiceRequest {
        id: format!("q-{:04}", rng.gen_range(0..10_000)),
        requester: "ap-1".into(),
        concept: concept.clone(),
        window,
        auth_token: "tok".into(),
        estimated_duration: rng.gen_range(10..=len.min(120)),
        priority: random_priority(rng),
        location: GridPoint::new(rng.gen_range(-10..=10), rng.gen_range(-10..=10)),
        constraints: random_constraints(rng),
        preferences: random_weights(rng),
    }
}

/// A registry of random offers over the given concepts, every record active.
pub fn random_registry(
    rng: &mut ChaCha8Rng,
    concepts: &[ConceptId],
    max_offers: usize,
) -> Registry {
    let mut registry = Registry::new();
    for seq in 0..rng.gen_range(0..=max_offers) {
        let concept = concepts.choose(rng).unwrap();
        registry.register(random_offer(rng, seq, concept), 0);
    }
    registry
}

// --- random federations -----------------------------------------------------

pub fn cc(id: &str) -> CcId {
    CcId::new(id).unwrap()
}

/// A random topology of up to `max_ccs` coordination centers: a peer graph
/// over the communities (cycles welcome) with houses hanging under random
/// parents. Registries are filled with random offers over `concepts`.
pub fn random_federation(
    rng: &mut ChaCha8Rng,
    max_ccs: usize,
    concepts: &[ConceptId],
) -> Federation {
    let n_comm = rng.gen_range(1..=max_ccs.min(6));
    let n_house = rng.gen_range(0..=max_ccs - n_comm);
    let comm_ids: Vec<CcId> = (0..n_comm).map(|i| cc(&format!("comm-{i:02}"))).collect();
    let mut peers: Vec<BTreeSet<CcId>> = vec![BTreeSet::new(); n_comm];
    for i in 0..n_comm {
        for j in 0..i {
            if rng.gen_bool(0.4) {
                peers[i].insert(comm_ids[j].clone());
                peers[j].insert(comm_ids[i].clone());
            }
        }
    }
    let mut configs: Vec<CcConfig> = comm_ids
        .iter()
        .zip(peers)
        .map(|(id, peers)| CcConfig {
            id: id.clone(),
            kind: CcKind::Community,
            parent: None,
            peers,
        })
        .collect();
    for k in 0..n_house {
        configs.push(CcConfig {
            id: cc(&format!("h-{k:02}")),
            kind: CcKind::House,
            parent: Some(comm_ids.choose(rng).unwrap().clone()),
            peers: BTreeSet::new(),
        });
    }
    let mut fed = Federation::build(configs).unwrap();
    let ids: Vec<CcId> = fed.ccs.keys().cloned().collect();
    let mut seq = 0;
    for id in &ids {
        for _ in 0..rng.gen_range(0..=2) {
            let concept = concepts.choose(rng).unwrap();
            let offer = random_offer(rng, seq, concept);
            seq += 1;
            fed.get_mut(id).unwrap().registry.register(offer, 0);
        }
    }
    fed
}
