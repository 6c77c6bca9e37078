//! Priority-aware scheduling over matched candidates.
//!
//! Given the constraint-filtered candidates for a request, the scheduler
//! scores them against the requester's soft preferences, finds the earliest
//! slot each provider could actually serve, and picks a winner. EMERGENCY
//! requests that fit nowhere may preempt one existing lower-priority booking;
//! everything else simply fails when the calendars are full.
//!
//! All times are integer minutes. Feasibility only needs to probe candidate
//! starts where the blocked set can change: the start of each free run and
//! the ends of existing bookings.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::descriptions::{Priority, ServiceOffer, ServiceRequest};
use crate::matcher::{record_order_key, MatchCandidate};
use crate::units::{Minutes, TimeInterval};

/// One committed slot on a provider record's calendar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Booking {
    /// run-wide monotonic sequence, assigned at booking time
    pub seq: u64,
    pub contract_id: String,
    pub request_id: String,
    pub interval: TimeInterval,
    pub priority: Priority,
}

/// The bookings held against one registry record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BookingLedger {
    bookings: Vec<Booking>,
}

impl BookingLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn book(&mut self, booking: Booking) {
        debug_assert!(
            self.bookings.last().is_none_or(|b| b.seq < booking.seq),
            "booking sequence must be monotonic"
        );
        self.bookings.push(booking);
    }

    pub fn release(&mut self, seq: u64) -> Option<Booking> {
        let idx = self.bookings.iter().position(|b| b.seq == seq)?;
        Some(self.bookings.remove(idx))
    }

    pub fn release_by_contract(&mut self, contract_id: &str) -> Option<Booking> {
        let idx = self.bookings.iter().position(|b| b.contract_id == contract_id)?;
        Some(self.bookings.remove(idx))
    }

    pub fn bookings(&self) -> &[Booking] {
        &self.bookings
    }

    pub fn is_empty(&self) -> bool {
        self.bookings.is_empty()
    }
}

/// Highest simultaneous booking count anywhere inside `interval`. The count
/// only steps up at a booking start, so probing `interval.start` and every
/// booking start inside the interval is exhaustive.
fn max_overlap(bookings: &[Booking], interval: &TimeInterval) -> usize {
    let mut probes = vec![interval.start];
    for b in bookings {
        if b.interval.start > interval.start && b.interval.start < interval.end {
            probes.push(b.interval.start);
        }
    }
    probes
        .into_iter()
        .map(|t| bookings.iter().filter(|b| b.interval.contains_instant(t)).count())
        .max()
        .unwrap_or(0)
}

/// Earliest interval of `duration` minutes inside `window` that the offer's
/// availability covers and that stays under the offer's capacity given the
/// existing bookings. `None` when nothing fits.
pub fn feasible(
    offer: &ServiceOffer,
    bookings: &[Booking],
    window: TimeInterval,
    duration: Minutes,
) -> Option<TimeInterval> {
    if duration <= 0 {
        return None;
    }
    // availability runs are sorted and disjoint, so the first hit is earliest
    for run in &offer.availability {
        let lo = run.start.max(window.start);
        let hi = run.end.min(window.end);
        if hi - lo < duration {
            continue;
        }
        let mut starts = vec![lo];
        for b in bookings {
            if b.interval.end > lo && b.interval.end + duration <= hi {
                starts.push(b.interval.end);
            }
        }
        starts.sort_unstable();
        starts.dedup();
        for s in starts {
            let slot = TimeInterval::new(s, s + duration).expect("positive duration");
            if max_overlap(bookings, &slot) < offer.capacity as usize {
                return Some(slot);
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: MatchCandidate,
    pub score: f64,
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Scores candidates against the request's preference weights.
///
/// Quality, price, and distance are min-max normalized over this cohort; a
/// criterion that is constant across the cohort normalizes to 0. Higher
/// quality raises the score, higher price and distance lower it:
/// `w_quality * nq + w_price * (1 - np) + w_distance * (1 - nd)`.
pub fn score(request: &ServiceRequest, candidates: &[MatchCandidate]) -> Vec<ScoredCandidate> {
    let qualities: Vec<f64> =
        candidates.iter().map(|c| f64::from(c.record.offer.quality)).collect();
    let prices: Vec<f64> = candidates.iter().map(|c| c.record.offer.price as f64).collect();
    let distances: Vec<f64> =
        candidates.iter().map(|c| request.location.distance(&c.record.offer.location)).collect();
    let (q_lo, q_hi) = min_max(&qualities);
    let (p_lo, p_hi) = min_max(&prices);
    let (d_lo, d_hi) = min_max(&distances);
    let norm = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let w = &request.preferences;
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ScoredCandidate {
            candidate: c.clone(),
            score: w.w_quality * norm(qualities[i], q_lo, q_hi)
                + w.w_price * (1.0 - norm(prices[i], p_lo, p_hi))
                + w.w_distance * (1.0 - norm(distances[i], d_lo, d_hi)),
        })
        .collect()
}

/// The scheduler's decision for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidate: MatchCandidate,
    pub score: f64,
    pub interval: TimeInterval,
    /// booking that must be cancelled to make room, if any
    pub preempted: Option<Booking>,
}

/// `a` wins over `b` under the fixed tiebreak chain: better degree, higher
/// score, earlier slot, lower record id.
fn beats(a: &Selection, b: &Selection) -> bool {
    a.candidate
        .degree
        .cmp(&b.candidate.degree)
        .then_with(|| a.score.partial_cmp(&b.score).unwrap_or(Ordering::Equal))
        .then_with(|| b.interval.start.cmp(&a.interval.start))
        .then_with(|| {
            record_order_key(&b.candidate.record.record_id)
                .cmp(&record_order_key(&a.candidate.record.record_id))
        })
        == Ordering::Greater
}

fn consider(best: &mut Option<Selection>, next: Selection) {
    match best {
        Some(current) if !beats(&next, current) => {}
        _ => *best = Some(next),
    }
}

/// Picks a candidate and slot for the request.
///
/// First pass books around existing commitments only. If nothing fits and the
/// request is EMERGENCY, a second pass looks for a single strictly
/// lower-priority booking per candidate whose removal frees a slot; the
/// victim is chosen by lowest priority, then latest start, then youngest
/// booking. Equal or higher priority bookings are never touched, and no
/// preemption happens while any preemption-free option exists.
pub fn select_with_preemption(
    request: &ServiceRequest,
    scored: &[ScoredCandidate],
    ledgers: &BTreeMap<String, BookingLedger>,
) -> Option<Selection> {
    let window = request.window;
    let duration = request.estimated_duration;
    let empty = BookingLedger::new();
    let ledger_for = |record_id: &str| ledgers.get(record_id).unwrap_or(&empty);

    let mut best: Option<Selection> = None;
    for sc in scored {
        let bookings = ledger_for(&sc.candidate.record.record_id).bookings();
        if let Some(interval) = feasible(&sc.candidate.record.offer, bookings, window, duration) {
            consider(
                &mut best,
                Selection {
                    candidate: sc.candidate.clone(),
                    score: sc.score,
                    interval,
                    preempted: None,
                },
            );
        }
    }
    if best.is_some() || request.priority != Priority::Emergency {
        return best;
    }

    for sc in scored {
        let bookings = ledger_for(&sc.candidate.record.record_id).bookings();
        let mut victims: Vec<&Booking> = bookings
            .iter()
            .filter(|b| b.priority < request.priority && b.interval.overlaps(&window))
            .collect();
        victims.sort_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then_with(|| b.interval.start.cmp(&a.interval.start))
                .then_with(|| b.seq.cmp(&a.seq))
        });
        for victim in victims {
            let remaining: Vec<Booking> =
                bookings.iter().filter(|b| b.seq != victim.seq).cloned().collect();
            if let Some(interval) =
                feasible(&sc.candidate.record.offer, &remaining, window, duration)
            {
                consider(
                    &mut best,
                    Selection {
                        candidate: sc.candidate.clone(),
                        score: sc.score,
                        interval,
                        preempted: Some(victim.clone()),
                    },
                );
                break;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptions::{
        format_offer, format_request, FormatOptions, RawDescription, SourceKind,
    };
    use crate::kb::{Concept, ConceptId, KbMutation, KnowledgeBase};
    use crate::matcher::MatchDegree;
    use crate::registry::Registry;
    use crate::units::GridPoint;

    const TOL: f64 = 1e-9;

    fn kb() -> KnowledgeBase {
        let mut kb = KnowledgeBase::new();
        for id in ["gardening", "medical-care"] {
            kb = kb
                .mutate(KbMutation::AddConcept(Concept {
                    id: ConceptId::new(id).unwrap(),
                    label: id.into(),
                    domain: "test".into(),
                }))
                .unwrap();
        }
        kb
    }

    fn offer(provider: &str) -> ServiceOffer {
        let raw = RawDescription::new(SourceKind::HumanForm)
            .with("service_type", "gardening")
            .with("provider", provider)
            .with("provider_type", "informal")
            .with("availability", "[[0,1440]]");
        format_offer(&raw, &kb(), 1440, FormatOptions::default()).unwrap().value
    }

    fn request_with(priority: &str, weights: Option<(f64, f64, f64)>) -> ServiceRequest {
        let mut raw = RawDescription::new(SourceKind::HumanForm)
            .with("service_type", "gardening")
            .with("requester", "ap-1")
            .with("window_start", "0")
            .with("window_end", "200")
            .with("estimated_duration", "60")
            .with("priority", priority);
        if let Some((wq, wp, wd)) = weights {
            raw = raw
                .with("w_quality", wq.to_string())
                .with("w_price", wp.to_string())
                .with("w_distance", wd.to_string());
        }
        format_request(&raw, &kb(), FormatOptions::default()).unwrap().value
    }

    fn booking(seq: u64, start: Minutes, end: Minutes, priority: Priority) -> Booking {
        Booking {
            seq,
            contract_id: format!("c-{seq:04}"),
            request_id: format!("q-{seq:04}"),
            interval: TimeInterval::new(start, end).unwrap(),
            priority,
        }
    }

    fn window(start: Minutes, end: Minutes) -> TimeInterval {
        TimeInterval::new(start, end).unwrap()
    }

    #[test]
    fn feasible_prefers_earliest_start() {
        let offer = offer("vol-1");
        assert_eq!(feasible(&offer, &[], window(30, 200), 60), Some(window(30, 90)));
    }

    #[test]
    fn feasible_clips_to_availability() {
        let raw = RawDescription::new(SourceKind::HumanForm)
            .with("service_type", "gardening")
            .with("provider", "vol-1")
            .with("provider_type", "informal")
            .with("availability", "[[100,300],[400,500]]");
        let offer = format_offer(&raw, &kb(), 1440, FormatOptions::default()).unwrap().value;
        // window opens before the first run: slot waits for availability
        assert_eq!(feasible(&offer, &[], window(0, 1440), 50), Some(window(100, 150)));
        // too long for run one, fits in run two
        assert_eq!(feasible(&offer, &[], window(0, 1440), 250), None);
        assert_eq!(feasible(&offer, &[], window(250, 1440), 100), Some(window(400, 500)));
    }

    #[test]
    fn feasible_steps_over_existing_bookings() {
        let offer = offer("vol-1");
        let busy = [booking(1, 0, 120, Priority::Routine)];
        assert_eq!(feasible(&offer, &busy, window(0, 200), 60), Some(window(120, 180)));
        // booking swallows the whole window
        assert_eq!(feasible(&offer, &busy, window(0, 120), 60), None);
    }

    #[test]
    fn feasible_respects_capacity_above_one() {
        let raw = RawDescription::new(SourceKind::HumanForm)
            .with("service_type", "gardening")
            .with("provider", "crew-1")
            .with("provider_type", "professional")
            .with("capacity", "2");
        let offer = format_offer(&raw, &kb(), 1440, FormatOptions::default()).unwrap().value;
        let busy = [booking(1, 0, 120, Priority::Routine)];
        // one booking leaves a second seat open
        assert_eq!(feasible(&offer, &busy, window(0, 200), 60), Some(window(0, 60)));
        let packed = [booking(1, 0, 120, Priority::Routine), booking(2, 30, 90, Priority::Routine)];
        // both seats taken over [30,90): earliest clear run starts at 90
        assert_eq!(feasible(&offer, &packed, window(0, 200), 60), Some(window(90, 150)));
    }

    fn exact(registry: &mut Registry, offer: ServiceOffer) -> MatchCandidate {
        MatchCandidate { record: registry.register(offer, 0), degree: MatchDegree::Exact }
    }

    #[test]
    fn score_normalizes_over_the_cohort() {
        let mut registry = Registry::new();
        let mut good = offer("pro-1");
        good.price = 1000;
        good.quality = 5;
        let mut cheap_ish = offer("pro-2");
        cheap_ish.price = 3000;
        cheap_ish.quality = 3;
        let candidates = vec![exact(&mut registry, good), exact(&mut registry, cheap_ish)];

        let request = request_with("ROUTINE", Some((0.5, 0.3, 0.2)));
        let scored = score(&request, &candidates);
        assert!((scored[0].score - 1.0).abs() < TOL, "got {}", scored[0].score);
        assert!((scored[1].score - 0.2).abs() < TOL, "got {}", scored[1].score);
    }

    #[test]
    fn constant_criteria_normalize_to_zero() {
        let mut registry = Registry::new();
        let candidates = vec![exact(&mut registry, offer("vol-1"))];
        let request = request_with("ROUTINE", Some((0.5, 0.3, 0.2)));
        let scored = score(&request, &candidates);
        // single candidate: every criterion is constant, so only the price
        // and distance terms (at their best value 1) contribute
        assert!((scored[0].score - 0.5).abs() < TOL);
    }

    #[test]
    fn selection_prefers_degree_over_score() {
        let mut registry = Registry::new();
        let mut shiny = offer("pro-1");
        shiny.quality = 5;
        let humble = offer("vol-1");
        let scored = vec![
            ScoredCandidate {
                candidate: MatchCandidate {
                    record: registry.register(shiny, 0),
                    degree: MatchDegree::Subsuming { hops: 1 },
                },
                score: 0.9,
            },
            ScoredCandidate {
                candidate: MatchCandidate {
                    record: registry.register(humble, 0),
                    degree: MatchDegree::Exact,
                },
                score: 0.1,
            },
        ];
        let request = request_with("ROUTINE", None);
        let pick = select_with_preemption(&request, &scored, &BTreeMap::new()).unwrap();
        assert_eq!(pick.candidate.record.offer.provider, "vol-1");
        assert!(pick.preempted.is_none());
    }

    #[test]
    fn closer_provider_wins_on_distance_weight() {
        let mut registry = Registry::new();
        let mut near = offer("doctor-near");
        near.provider_type = crate::descriptions::ProviderType::Professional;
        near.location = GridPoint::new(1, 0);
        let mut far = offer("doctor-far");
        far.provider_type = crate::descriptions::ProviderType::Professional;
        far.location = GridPoint::new(50, 0);
        let candidates = vec![exact(&mut registry, far), exact(&mut registry, near)];

        let request = request_with("EMERGENCY", Some((0.2, 0.2, 0.6)));
        let scored = score(&request, &candidates);
        let pick = select_with_preemption(&request, &scored, &BTreeMap::new()).unwrap();
        assert_eq!(pick.candidate.record.offer.provider, "doctor-near");
        assert!(pick.preempted.is_none());
    }

    #[test]
    fn emergency_preempts_lower_priority_when_full() {
        let mut registry = Registry::new();
        let candidates = vec![exact(&mut registry, offer("vol-1"))];
        let record_id = candidates[0].record.record_id.clone();
        let mut ledgers = BTreeMap::new();
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 1440, Priority::Routine));
        ledgers.insert(record_id, ledger);

        let routine = request_with("ROUTINE", None);
        let scored = score(&routine, &candidates);
        assert_eq!(select_with_preemption(&routine, &scored, &ledgers), None);

        let emergency = request_with("EMERGENCY", None);
        let scored = score(&emergency, &candidates);
        let pick = select_with_preemption(&emergency, &scored, &ledgers).unwrap();
        let victim = pick.preempted.expect("must preempt to fit");
        assert_eq!(victim.seq, 1);
        assert_eq!(pick.interval, window(0, 60));
    }

    #[test]
    fn emergency_never_preempts_equal_priority() {
        let mut registry = Registry::new();
        let candidates = vec![exact(&mut registry, offer("vol-1"))];
        let record_id = candidates[0].record.record_id.clone();
        let mut ledgers = BTreeMap::new();
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 1440, Priority::Emergency));
        ledgers.insert(record_id, ledger);

        let emergency = request_with("EMERGENCY", None);
        let scored = score(&emergency, &candidates);
        assert_eq!(select_with_preemption(&emergency, &scored, &ledgers), None);
    }

    #[test]
    fn no_preemption_while_a_free_candidate_exists() {
        let mut registry = Registry::new();
        let busy = exact(&mut registry, offer("vol-busy"));
        let free = exact(&mut registry, offer("vol-free"));
        let mut ledgers = BTreeMap::new();
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 1440, Priority::Routine));
        ledgers.insert(busy.record.record_id.clone(), ledger);

        let emergency = request_with("EMERGENCY", None);
        let scored = score(&emergency, &[busy, free]);
        let pick = select_with_preemption(&emergency, &scored, &ledgers).unwrap();
        assert_eq!(pick.candidate.record.offer.provider, "vol-free");
        assert!(pick.preempted.is_none());
    }

    #[test]
    fn victim_choice_prefers_lowest_priority_then_latest_start() {
        let mut registry = Registry::new();
        let candidates = vec![exact(&mut registry, offer("vol-1"))];
        let record_id = candidates[0].record.record_id.clone();

        // elevated early, routine late: routine loses despite starting later
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 100, Priority::Elevated));
        ledger.book(booking(2, 100, 1440, Priority::Routine));
        let ledgers = BTreeMap::from([(record_id.clone(), ledger)]);
        let emergency = request_with("EMERGENCY", None);
        let scored = score(&emergency, &candidates);
        let pick = select_with_preemption(&emergency, &scored, &ledgers).unwrap();
        assert_eq!(pick.preempted.as_ref().unwrap().seq, 2);

        // equal priority: the later-starting booking is the victim
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 100, Priority::Routine));
        ledger.book(booking(2, 100, 1440, Priority::Routine));
        let ledgers = BTreeMap::from([(record_id, ledger)]);
        let pick = select_with_preemption(&emergency, &scored, &ledgers).unwrap();
        assert_eq!(pick.preempted.as_ref().unwrap().seq, 2);
    }

    #[test]
    fn ledger_release_round_trip() {
        let mut ledger = BookingLedger::new();
        ledger.book(booking(1, 0, 60, Priority::Routine));
        ledger.book(booking(2, 60, 120, Priority::Routine));
        assert_eq!(ledger.release(1).unwrap().seq, 1);
        assert_eq!(ledger.release(1), None);
        assert_eq!(ledger.release_by_contract("c-0002").unwrap().seq, 2);
        assert!(ledger.is_empty());
    }
}
