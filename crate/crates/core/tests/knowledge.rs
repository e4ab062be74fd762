use harmonic_core::frames::{CmpOp, Filler};
use harmonic_core::frames::{FrameId, FrameInstance};
use harmonic_core::kb::{
    fixture_knowledge, load_knowledge, months_between, CauseSearch, EpisodicStore, FramePattern, KbError, Source,
    StepKind,
};

#[test]
fn overheat_has_two_engine_causes_in_declaration_order() {
    let kb = fixture_knowledge();
    let causes = kb.find_causes("OVERHEAT", "ENGINE").unwrap();
    assert_eq!(causes.len(), 2);
    assert_eq!(causes[0].cause.concept(), "OBSTRUCT");
    assert_eq!(causes[0].cause.get("theme"), Some(&Filler::Concept("PIPE".into())));
    assert_eq!(causes[1].cause.concept(), "STATE-OF-REPAIR");
    assert_eq!(
        causes[1].cause.get("domain"),
        Some(&Filler::Concept("THERMOSTAT".into()))
    );
    assert_eq!(
        causes[1].cause.get("range"),
        Some(&Filler::Compare {
            op: CmpOp::Lt,
            value: 0.7
        })
    );
}

#[test]
fn engine_restricted_links_exclude_other_machines() {
    let kb = fixture_knowledge();
    assert!(kb.find_causes("OVERHEAT", "PUMP").unwrap().is_empty());
    assert_eq!(
        kb.find_causes("NOT-A-CONCEPT", "ENGINE"),
        Err(KbError::UnknownConcept("NOT-A-CONCEPT".into()))
    );
}

#[test]
fn find_causes_is_pure() {
    let kb = fixture_knowledge();
    let a = kb.find_causes("OVERHEAT", "ENGINE").unwrap();
    let b = kb.find_causes("OVERHEAT", "ENGINE").unwrap();
    assert_eq!(a, b);
}

const CHAIN: &str = "CONCEPT ALL\nCONCEPT A\n  IS-A ALL\n  CAUSED-BY a-b B()\nCONCEPT B\n  IS-A ALL\n  CAUSED-BY b-c C()\nCONCEPT C\n  IS-A ALL\n  CAUSED-BY c-a A()\nCONCEPT D\n  IS-A A\n";

/// Breadth-first closure over (symptom, cause) pairs.
fn closure_oracle(edges: &[(&str, &str, &str)], start: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut frontier = vec![start.to_string()];
    let mut seen = vec![start.to_string()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for s in &frontier {
            for (id, from, to) in edges {
                if from == s && !out.contains(&id.to_string()) {
                    out.push(id.to_string());
                    if !seen.contains(&to.to_string()) {
                        seen.push(to.to_string());
                        next.push(to.to_string());
                    }
                }
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn depth_two_chain_direct_and_transitive() {
    let kb = load_knowledge(CHAIN, "", "").unwrap();
    let direct: Vec<&str> = kb
        .find_causes("A", "ALL")
        .unwrap()
        .iter()
        .map(|l| l.id.as_str())
        .collect();
    assert_eq!(direct, ["a-b"]);
    let transitive: Vec<String> = kb
        .find_causes_with(
            "A",
            "ALL",
            CauseSearch {
                transitive: true,
                inherit: false,
            },
        )
        .unwrap()
        .iter()
        .map(|l| l.id.clone())
        .collect();
    let edges = [("a-b", "A", "B"), ("b-c", "B", "C"), ("c-a", "C", "A")];
    assert_eq!(transitive, closure_oracle(&edges, "A"));
    assert!(kb.find_causes("D", "ALL").unwrap().is_empty());
    let inherited = kb
        .find_causes_with(
            "D",
            "ALL",
            CauseSearch {
                transitive: false,
                inherit: true,
            },
        )
        .unwrap();
    assert_eq!(inherited.len(), 1);
}

#[test]
fn goals_map_to_unique_scripts() {
    let kb = fixture_knowledge();
    let diag = kb.script_for_goal("HYPOTHESIZE-MECHANICAL-PROBLEM-CAUSE").unwrap();
    let names: Vec<&str> = diag.steps.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["SEARCH-ONTOLOGY", "REPORT-HYPOTHESES"]);
    assert!(diag.preconditions.is_empty());

    let fetch = kb.script_for_goal("FETCH").unwrap();
    let subjects: Vec<&str> = fetch.preconditions.iter().map(|p| p.subject.as_str()).collect();
    assert_eq!(subjects, ["features-of-theme", "location-of-theme"]);
    let commands: Vec<&str> = fetch
        .steps
        .iter()
        .filter(|s| s.kind == StepKind::Command)
        .map(|s| s.name.as_str())
        .collect();
    assert_eq!(commands, ["GO-TO-OBJECT", "PICKUP", "WAYPOINT", "DROPOBJECT"]);
    assert_eq!(
        fetch.preconditions[1].resolution_order,
        [Source::SituationModel, Source::EpisodicMemory, Source::AskTeammate]
    );
    assert_eq!(
        kb.script_for_goal("UNKNOWN-GOAL"),
        Err(KbError::NoScript("UNKNOWN-GOAL".into()))
    );
    for p in &fetch.preconditions {
        assert!(kb.metascript_for(&p.subject).is_some());
    }
}

#[test]
fn service_log_has_sixteen_entries_over_two_years() {
    let kb = fixture_knowledge();
    let all = kb.search_logs("");
    assert_eq!(all.len(), 16);
    let span = months_between(&all[0].date, &all[15].date).unwrap();
    assert!((23..=24).contains(&span));
    assert!(all.windows(2).all(|w| w[0].date <= w[1].date));
    assert!(kb.search_logs("warp-drive").is_empty());
}

#[test]
fn thermostat_log_query_matches_substring_scan() {
    let kb = fixture_knowledge();
    let raw = include_str!("../fixtures/service_log.tsv");
    let expected: Vec<&str> = raw
        .lines()
        .filter(|l| {
            l.to_lowercase()
                .split_once('\t')
                .is_some_and(|(_, rest)| rest.contains("thermostat"))
        })
        .map(|l| &l[..10])
        .collect();
    let got: Vec<&str> = kb.search_logs("Thermostat").iter().map(|e| e.date.as_str()).collect();
    assert_eq!(got, expected);
    assert!(got.len() >= 3);
}

#[test]
fn episodic_lookup_prefers_most_recent() {
    let mut store = EpisodicStore::new();
    let at =
        |zone: &str| FrameInstance::new(FrameId::new("THERMOSTAT", 1)).with("located-in", Filler::Concept(zone.into()));
    store.record(5, at("CORRIDOR"));
    store.record(9, at("STORES-ZONE"));
    let pattern = FramePattern::new("THERMOSTAT").any("located-in");
    let oracle = store
        .records()
        .iter()
        .filter(|r| pattern.unifies(&r.content))
        .max_by_key(|r| r.timestamp)
        .unwrap();
    assert_eq!(store.lookup(&pattern).unwrap(), oracle);
    assert_eq!(oracle.timestamp, 9);
}

#[test]
fn knowledge_round_trips_through_text() {
    let kb = fixture_knowledge();
    let (o, s, l) = kb.render();
    let again = load_knowledge(&o, &s, &l).unwrap();
    assert_eq!(again, kb);
}
