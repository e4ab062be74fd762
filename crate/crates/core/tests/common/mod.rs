//! Test-side oracles and generators shared by the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;

use harmonic_core::command::CommandName;
use harmonic_core::frames::{CmpOp, Filler, FrameDocument, FrameId, FrameInstance};
use harmonic_core::llm::synthetic::{AfterFailure, FactError, Knobs};
use harmonic_core::transcript::{Payload, Speaker, TrialTranscript};

fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Two-sided Fisher p by exact integer comparison of hypergeometric
/// numerators over all tables sharing the margins.
pub fn fisher_oracle(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let weight = |x: u64| choose(r1, x) * choose(r2, c1 - x);
    let observed = weight(a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let hits: u128 = (lo..=hi).map(weight).filter(|w| *w <= observed).sum();
    let total = choose(n, c1);
    if total == 0 {
        return 1.0;
    }
    (hits as f64 / total as f64).min(1.0)
}

/// U by pairwise comparison: wins of `a` over `b`, ties counted half.
pub fn pairwise_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x, y)))
        .map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        })
        .sum()
}

fn splits(pool: &[f64], k: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in start..pool.len() {
        chosen.push(i);
        splits(pool, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// `(U, two-sided p)` by enumerating every relabelling of the pooled
/// sample into groups of the original sizes.
pub fn mwu_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let u = pairwise_u(a, b);
    let mean = (a.len() * b.len()) as f64 / 2.0;
    let pool: Vec<f64> = a.iter().chain(b).copied().collect();
    let (mut hits, mut total) = (0u64, 0u64);
    splits(&pool, a.len(), 0, &mut Vec::new(), &mut |idx| {
        let x: Vec<f64> = idx.iter().map(|&i| pool[i]).collect();
        let y: Vec<f64> = (0..pool.len()).filter(|i| !idx.contains(i)).map(|i| pool[i]).collect();
        total += 1;
        if (pairwise_u(&x, &y) - mean).abs() >= (u - mean).abs() - 1e-9 {
            hits += 1;
        }
    });
    (u, hits as f64 / total as f64)
}

/// Any synthetic-model behavior.
pub fn knobs() -> impl Strategy<Value = Knobs> {
    let fact = prop_oneof![
        Just(None),
        Just(Some(FactError::Months)),
        Just(Some(FactError::Replaced)),
        Just(Some(FactError::Colour)),
    ];
    let after = prop_oneof![
        Just(AfterFailure::Loop),
        Just(AfterFailure::ClaimSuccess),
        Just(AfterFailure::Circle),
        Just(AfterFailure::Stall),
        Just(AfterFailure::Recover),
    ];
    (any::<[bool; 9]>(), fact, after).prop_map(|(b, fact_error, after_failure)| Knobs {
        retrieve_diagnose: b[0],
        retrieve_fetch: b[1],
        hypothesis_first: b[2],
        hedge: b[3],
        fact_error,
        ask_features: b[4],
        ask_location: b[5],
        invent_label: b[6],
        use_search: b[7],
        schema_slip: b[8],
        after_failure,
    })
}

fn concept() -> impl Strategy<Value = String> {
    "[A-Z][A-Z0-9-]{0,7}"
}

fn slot_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,7}"
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-1000i32..1000).prop_map(f64::from),
        (-1.0e6..1.0e6f64),
        (0.0..1.0f64),
        Just(1.0e-9),
    ]
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z][a-z0-9_.:/-]{0,10}",
        "[ -~]{0,12}",
        "[\\PC\n\t]{0,8}",
        "-?[0-9]{1,4}",
    ]
}

/// Filler with `Instance` refs drawn as indices into the document's frames.
#[derive(Clone, Debug)]
enum Draft {
    Instance(usize),
    Other(Filler),
}

fn filler() -> impl Strategy<Value = Draft> {
    let op = prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Gt), Just(CmpOp::Ge)];
    prop_oneof![
        any::<usize>().prop_map(Draft::Instance),
        (concept(), 1u32..5).prop_map(|(c, i)| Draft::Other(Filler::CoRef(FrameId::new(c, i)))),
        concept().prop_map(|c| Draft::Other(Filler::Concept(c))),
        (number(), number()).prop_map(|(a, b)| Draft::Other(Filler::Range {
            lo: a.min(b),
            hi: a.max(b)
        })),
        (op, number()).prop_map(|(op, value)| Draft::Other(Filler::Compare { op, value })),
        number().prop_map(|n| Draft::Other(Filler::Number(n))),
        text().prop_map(|t| Draft::Other(Filler::Text(t))),
    ]
}

fn frame_draft() -> impl Strategy<Value = (String, Vec<(String, Draft)>, Option<String>)> {
    (
        concept(),
        proptest::collection::btree_map(slot_name(), filler(), 0..5),
        proptest::option::of(text()),
        proptest::option::of("[A-Z][a-z]{0,5}\\.[1-9]"),
    )
        .prop_map(|(c, slots, directive, group)| {
            let mut slots: Vec<(String, Draft)> = slots.into_iter().collect();
            if let Some(d) = directive {
                slots.push(("take-this-action".into(), Draft::Other(Filler::Directive(d))));
            }
            (c, slots, group)
        })
}

/// Well-formed documents: unique ids, unique slot names per frame, every
/// `Instance` resolving inside the document, and group labels in
/// contiguous runs.
pub fn arb_document() -> impl Strategy<Value = FrameDocument> {
    proptest::collection::vec(frame_draft(), 0..7).prop_map(|drafts| {
        let mut next: std::collections::BTreeMap<String, u32> = Default::default();
        let ids: Vec<FrameId> = drafts
            .iter()
            .map(|(c, _, _)| {
                let i = next.entry(c.clone()).or_insert(0);
                *i += 1;
                FrameId::new(c.clone(), *i)
            })
            .collect();
        let mut seen_groups: Vec<String> = Vec::new();
        let mut prev: Option<String> = None;
        let frames = drafts
            .into_iter()
            .zip(&ids)
            .map(|((_, slots, group), id)| {
                let group = group.filter(|g| prev.as_ref() == Some(g) || !seen_groups.contains(g));
                if let Some(g) = &group {
                    if !seen_groups.contains(g) {
                        seen_groups.push(g.clone());
                    }
                }
                prev.clone_from(&group);
                FrameInstance {
                    id: id.clone(),
                    slots: slots
                        .into_iter()
                        .map(|(s, d)| {
                            let f = match d {
                                Draft::Instance(k) => Filler::Instance(ids[k % ids.len()].clone()),
                                Draft::Other(f) => f,
                            };
                            (s, f)
                        })
                        .collect(),
                    group,
                    provenance: None,
                }
            })
            .collect();
        FrameDocument { frames }
    })
}

/// Physical commands working toward the fetch that were dispatched before
/// the human stated the target label. Only moves back to the requester
/// and releases are exempt.
pub fn fetch_commands_before_label(t: &TrialTranscript, label: &str) -> Vec<u32> {
    let mut told = false;
    let mut early = Vec::new();
    for e in &t.events {
        match &e.payload {
            Payload::Utterance {
                speaker: Speaker::Human,
                text,
                ..
            } if text.contains(label) => told = true,
            Payload::Command { id, command } if !told => {
                let toward_fetch = match command.name {
                    CommandName::Search | CommandName::Pickup => true,
                    CommandName::Waypoint => command.param("waypoint").is_some_and(|w| w.starts_with("stores")),
                    _ => false,
                };
                if toward_fetch {
                    early.push(*id);
                }
            }
            _ => {}
        }
    }
    early
}
