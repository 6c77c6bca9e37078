//! Seeded random scenario generation.
//!
//! Produces self-contained scenario files (ontology inlined, no external
//! paths) that are valid by construction: every generated file loads under
//! strict validation and replays without runtime errors. The generator is
//! deterministic; the same seed always yields byte-identical output, which
//! makes generated corpora usable as fixtures for differential and
//! determinism testing.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::units::Minutes;

/// Horizon for generated scenarios: one day of minutes.
pub const GEN_HORIZON: Minutes = 1440;

/// Generates a scenario document for the given seed.
pub fn generate_scenario(seed: u64) -> Value {
    Generator { rng: ChaCha8Rng::seed_from_u64(seed), seed }.build()
}

/// Canonical serialization of a generated scenario: pretty JSON with sorted
/// keys and a trailing newline.
pub fn generate_scenario_text(seed: u64) -> String {
    format!("{:#}\n", generate_scenario(seed))
}

struct Generator {
    rng: ChaCha8Rng,
    seed: u64,
}

impl Generator {
    fn build(&mut self) -> Value {
        let care_n = self.rng.gen_range(4..=14usize);
        let dev_n = self.rng.gen_range(1..=4usize);
        let care: Vec<String> = (0..care_n).map(|i| format!("svc-{i:02}")).collect();
        let devices: Vec<String> = (0..dev_n).map(|i| format!("dev-{i:02}")).collect();

        let ontology = self.ontology(&care, &devices);
        let (topology, communities, houses) = self.topology();
        let (events, faults) = self.events(&care, &devices, &communities, &houses);

        let mut doc = json!({
            "name": format!("generated-{}", self.seed),
            "seed": self.seed,
            "horizon": GEN_HORIZON,
            "ontology": ontology,
            "topology": topology,
            "events": events,
        });
        if self.rng.gen_bool(0.3) {
            doc["hop_limit"] = json!(self.rng.gen_range(2..=6u32));
        }
        if self.rng.gen_bool(0.3) {
            doc["taxonomy"] = json!({ "_fallback": "999999", care[0].clone(): "561730" });
        }
        if let Some(f) = faults {
            doc["faults"] = f;
        }
        doc
    }

    /// Builds an Is-a forest per domain. Every edge points from a concept to
    /// one generated earlier, so the graph is acyclic by construction;
    /// occasional second parents make it a proper DAG rather than a tree.
    fn ontology(&mut self, care: &[String], devices: &[String]) -> Value {
        let mut concepts = Vec::new();
        let mut isa = Vec::new();
        for (domain, pool) in [("care", care), ("device", devices)] {
            for (i, id) in pool.iter().enumerate() {
                concepts.push(json!({
                    "id": id,
                    "label": format!("Generated {domain} concept {i}"),
                    "domain": domain,
                }));
                if i > 0 && self.rng.gen_bool(0.85) {
                    let parent = self.rng.gen_range(0..i);
                    isa.push(json!({ "child": id, "parent": pool[parent] }));
                    if i > 1 && self.rng.gen_bool(0.2) {
                        let second = self.rng.gen_range(0..i);
                        if second != parent {
                            isa.push(json!({ "child": id, "parent": pool[second] }));
                        }
                    }
                }
            }
        }

        let mut rules = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..self.rng.gen_range(0..=2usize) {
            let provider = devices[self.rng.gen_range(0..devices.len())].clone();
            let request = care[self.rng.gen_range(0..care.len())].clone();
            if seen.insert((provider.clone(), request.clone())) {
                rules.push(json!({
                    "provider": provider,
                    "request": request,
                    "rationale": "generated cross-domain fulfillment",
                }));
            }
        }
        json!({ "concepts": concepts, "isa": isa, "rules": rules })
    }

    fn topology(&mut self) -> (Value, Vec<String>, Vec<String>) {
        let comm_n = self.rng.gen_range(1..=4usize);
        let communities: Vec<String> =
            (0..comm_n).map(|i| format!("comm-{}", (b'a' + i as u8) as char)).collect();

        // connect each community to an earlier one so the peer graph is
        // connected, plus an occasional extra edge
        let mut peers: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); comm_n];
        for i in 1..comm_n {
            let j = self.rng.gen_range(0..i);
            peers[i].insert(communities[j].clone());
            peers[j].insert(communities[i].clone());
        }
        if comm_n >= 3 && self.rng.gen_bool(0.3) {
            let a = self.rng.gen_range(0..comm_n);
            let b = self.rng.gen_range(0..comm_n);
            if a != b {
                peers[a].insert(communities[b].clone());
                peers[b].insert(communities[a].clone());
            }
        }

        let house_n = self.rng.gen_range(1..=5usize);
        let houses: Vec<String> = (0..house_n).map(|i| format!("h-{}", i + 1)).collect();

        let mut entries = Vec::new();
        for (i, id) in communities.iter().enumerate() {
            let mut entry = json!({ "id": id, "kind": "community" });
            if !peers[i].is_empty() {
                entry["peers"] = json!(peers[i]);
            }
            entries.push(entry);
        }
        for id in &houses {
            let parent = &communities[self.rng.gen_range(0..communities.len())];
            entries.push(json!({ "id": id, "kind": "house", "parent": parent }));
        }
        (json!(entries), communities, houses)
    }

    fn events(
        &mut self,
        care: &[String],
        devices: &[String],
        communities: &[String],
        houses: &[String],
    ) -> (Value, Option<Value>) {
        let mut events: Vec<Value> = Vec::new();
        // (time, cc, provider, service_type) for later unregistration
        let mut registered: Vec<(Minutes, String, String, String)> = Vec::new();

        for seq in 0..self.rng.gen_range(2..=6usize) {
            let time = self.rng.gen_range(0..=200 as Minutes);
            let roll = self.rng.gen_range(0..10u32);
            let (provider_type, provider, concept) = if roll >= 7 {
                let name = format!("dev-node-{seq:02}");
                ("device", name, devices[self.rng.gen_range(0..devices.len())].clone())
            } else if roll >= 4 {
                let name = format!("org-{seq:02}");
                ("professional", name, care[self.rng.gen_range(0..care.len())].clone())
            } else {
                let name = format!("vol-{seq:02}");
                ("informal", name, care[self.rng.gen_range(0..care.len())].clone())
            };
            // devices live in houses; humans mostly register at communities
            let cc = if provider_type == "device" {
                houses[self.rng.gen_range(0..houses.len())].clone()
            } else if self.rng.gen_bool(0.7) {
                communities[self.rng.gen_range(0..communities.len())].clone()
            } else {
                houses[self.rng.gen_range(0..houses.len())].clone()
            };

            let mut payload = json!({
                "service_type": concept,
                "provider": provider,
                "provider_type": provider_type,
            });
            if provider_type == "device" {
                payload["endpoint"] = json!(format!("local://{provider}"));
            }
            if self.rng.gen_bool(0.7) {
                payload["price"] = json!(self.rng.gen_range(0..=5000_i64).to_string());
            }
            if self.rng.gen_bool(0.7) {
                payload["quality"] = json!(self.rng.gen_range(1..=5u8).to_string());
            }
            if self.rng.gen_bool(0.2) {
                payload["capacity"] = json!(self.rng.gen_range(1..=3u32).to_string());
            }
            if self.rng.gen_bool(0.5) {
                let x = self.rng.gen_range(-20..=20i64);
                let y = self.rng.gen_range(-20..=20i64);
                payload["location"] = json!(format!("{x},{y}"));
            }
            if self.rng.gen_bool(0.5) {
                payload["availability"] = json!(self.availability());
            }
            registered.push((time, cc.clone(), provider, concept));
            events.push(json!({ "time": time, "kind": "register", "cc": cc, "payload": payload }));
        }

        // (time, id) of each request, so settle events can reference one
        let mut requested: Vec<(Minutes, String)> = Vec::new();
        for seq in 0..self.rng.gen_range(2..=8usize) {
            let time = self.rng.gen_range(0..=1000 as Minutes);
            let start = self.rng.gen_range(time..=1200.max(time));
            let end = (start + self.rng.gen_range(30..=240 as Minutes)).min(GEN_HORIZON);
            let cc = if self.rng.gen_bool(0.8) {
                houses[self.rng.gen_range(0..houses.len())].clone()
            } else {
                communities[self.rng.gen_range(0..communities.len())].clone()
            };
            let id = format!("q-gen-{seq:02}");
            requested.push((time, id.clone()));
            let mut payload = json!({
                "id": id,
                "service_type": care[self.rng.gen_range(0..care.len())],
                "requester": format!("ap-{seq:02}"),
                "window_start": start.to_string(),
                "window_end": end.to_string(),
            });
            if self.rng.gen_bool(0.5) {
                let duration = self.rng.gen_range(15..=(end - start).max(15));
                payload["estimated_duration"] = json!(duration.min(end - start).to_string());
            }
            let roll = self.rng.gen_range(0..10u32);
            if roll >= 9 {
                payload["priority"] = json!("EMERGENCY");
            } else if roll >= 7 {
                payload["priority"] = json!("ELEVATED");
            }
            if self.rng.gen_bool(0.3) {
                payload["max_price"] = json!(self.rng.gen_range(500..=6000_i64).to_string());
            }
            if self.rng.gen_bool(0.2) {
                payload["min_quality"] = json!(self.rng.gen_range(1..=4u8).to_string());
            }
            if self.rng.gen_bool(0.15) {
                payload["allowed_provider_types"] = json!("informal,professional");
            }
            if self.rng.gen_bool(0.4) {
                let x = self.rng.gen_range(-20..=20i64);
                let y = self.rng.gen_range(-20..=20i64);
                payload["location"] = json!(format!("{x},{y}"));
            }
            if self.rng.gen_bool(0.2) {
                let (wq, wp, wd) = *[(0.5, 0.3, 0.2), (0.4, 0.4, 0.2), (1.0, 0.0, 0.0)]
                    .choose(&mut self.rng)
                    .expect("non-empty");
                payload["w_quality"] = json!(wq.to_string());
                payload["w_price"] = json!(wp.to_string());
                payload["w_distance"] = json!(wd.to_string());
            }
            events.push(json!({ "time": time, "kind": "request", "cc": cc, "payload": payload }));
        }

        if !registered.is_empty() && self.rng.gen_bool(0.35) {
            let (reg_time, cc, provider, concept) =
                registered[self.rng.gen_range(0..registered.len())].clone();
            let time = self.rng.gen_range((reg_time + 1)..=GEN_HORIZON);
            events.push(json!({
                "time": time,
                "kind": "unregister",
                "cc": cc,
                "payload": { "provider": provider, "service_type": concept },
            }));
        }

        // settling a request that ended up unmatched only logs a warning,
        // so this needs no knowledge of match outcomes
        if self.rng.gen_bool(0.3) {
            let (req_time, id) = requested[self.rng.gen_range(0..requested.len())].clone();
            let time = self.rng.gen_range((req_time + 1)..=GEN_HORIZON);
            let cc = houses[self.rng.gen_range(0..houses.len())].clone();
            events.push(json!({
                "time": time,
                "kind": "settle",
                "cc": cc,
                "payload": { "request_id": id },
            }));
        }

        events.sort_by_key(|e| e["time"].as_i64().expect("time is set"));
        for (i, event) in events.iter_mut().enumerate() {
            event["seq"] = json!(i as u64 + 1);
        }

        let faults = if communities.len() >= 2 && self.rng.gen_bool(0.25) {
            let a = self.rng.gen_range(0..communities.len());
            let mut b = self.rng.gen_range(0..communities.len());
            if a == b {
                b = (b + 1) % communities.len();
            }
            Some(json!({ "drop_links": [[communities[a], communities[b]]] }))
        } else {
            None
        };

        (json!(events), faults)
    }

    /// One or two disjoint availability runs inside the horizon, in the
    /// string form offers use.
    fn availability(&mut self) -> String {
        let s1 = self.rng.gen_range(0..=1000 as Minutes);
        let e1 = (s1 + self.rng.gen_range(60..=400 as Minutes)).min(GEN_HORIZON);
        if self.rng.gen_bool(0.3) && e1 + 60 < GEN_HORIZON {
            let s2 = self.rng.gen_range(e1..=(GEN_HORIZON - 60));
            let e2 = (s2 + self.rng.gen_range(60..=400 as Minutes)).min(GEN_HORIZON);
            if e2 > s2 {
                return format!("[[{s1},{e1}],[{s2},{e2}]]");
            }
        }
        format!("[{s1},{e1}]")
    }
}
