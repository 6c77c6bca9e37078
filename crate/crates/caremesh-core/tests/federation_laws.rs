//! Federation routing laws on random topologies, including lossy ones: local
//! hits are silent, resolution always terminates inside the message bound,
//! and no coordination center ever handles the same request twice.

mod common;

use std::collections::BTreeSet;

use rand::prelude::*;

use caremesh_core::federation::{resolve_request, MessageKind};
use caremesh_core::{FaultPlan, MatchConfig};

use common::{random_federation, random_kb, random_request, rng};

#[test]
fn a_local_candidate_means_zero_messages() {
    let mut rng = rng(0x10ca1);
    let mut local_hits = 0u32;
    for _ in 0..300 {
        let instance = random_kb(&mut rng, 8, 12, 2);
        let fed = random_federation(&mut rng, 12, &instance.concepts);
        let ids: Vec<_> = fed.ccs.keys().cloned().collect();
        let origin = ids.choose(&mut rng).unwrap().clone();
        let concept = instance.concepts.choose(&mut rng).unwrap();
        let request = random_request(&mut rng, concept);

        let mut log = Vec::new();
        let outcome = resolve_request(
            &fed,
            &instance.kb,
            &origin,
            &request,
            MatchConfig::default(),
            4,
            &FaultPlan::default(),
            0,
            &mut log,
        )
        .unwrap();
        if outcome.local {
            assert!(log.is_empty(), "local resolution must not talk to the federation");
            local_hits += 1;
        }
    }
    assert!(local_hits > 30, "generator should produce local hits");
}

#[test]
fn lossy_links_never_break_termination_or_the_bounds() {
    let mut rng = rng(0xd20b);
    let mut dropped_seen = 0u32;
    for round in 0..300 {
        let instance = random_kb(&mut rng, 8, 12, 2);
        let fed = random_federation(&mut rng, 20, &instance.concepts);
        let n_ccs = fed.ccs.len();
        let ids: Vec<_> = fed.ccs.keys().cloned().collect();

        // drop random directed links, including ones that will be used
        let mut faults = FaultPlan::default();
        for a in &ids {
            for b in &ids {
                if a != b && rng.gen_bool(0.12) {
                    faults.drop_links.insert((a.clone(), b.clone()));
                }
            }
        }

        let origin = ids.choose(&mut rng).unwrap().clone();
        let concept = instance.concepts.choose(&mut rng).unwrap();
        let request = random_request(&mut rng, concept);
        let hop_limit = rng.gen_range(0..=6);

        let mut log = Vec::new();
        resolve_request(
            &fed,
            &instance.kb,
            &origin,
            &request,
            MatchConfig::default(),
            hop_limit,
            &faults,
            0,
            &mut log,
        )
        .unwrap_or_else(|e| panic!("round {round}: resolution failed: {e}"));

        let requests: Vec<_> = log.iter().filter(|m| m.kind == MessageKind::MatchRequest).collect();
        let targets: BTreeSet<&str> = requests.iter().map(|m| m.to.as_str()).collect();
        assert_eq!(targets.len(), requests.len(), "round {round}: a target was reused");
        assert!(
            requests.len() <= 1 + n_ccs,
            "round {round}: {} requests for {n_ccs} centers",
            requests.len()
        );
        dropped_seen += log.iter().filter(|m| m.dropped).count() as u32;
    }
    assert!(dropped_seen > 50, "the fault plan should actually drop frames");
}
