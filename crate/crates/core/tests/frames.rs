use std::path::Path;

use harmonic_core::frames::templates::{gmr_to_utterance, utterance_to_tmr, EmptyScene};
use harmonic_core::frames::{parse_frames, parse_frames_with, Filler, FrameDocument, ParseOptions};
use harmonic_core::kb::fixture_knowledge;
use harmonic_core::ontoagent::assess_condition;
use harmonic_core::sim::ScenarioFixture;

fn listing(name: &str) -> FrameDocument {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/listings")
        .join(name);
    parse_frames(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn act(head: &str, rest: &str) -> FrameDocument {
    parse_frames(&format!("#{head}.1\n  agent #LEIA.1\n  beneficiary #HUMAN.1\n{rest}")).unwrap()
}

/// Every GMR shape the reference agent produces in the scenario.
fn fixture_gmrs() -> Vec<(String, FrameDocument)> {
    let kb = fixture_knowledge();
    let today = ScenarioFixture::canonical().scenario_date.clone();
    let age = "0.0001<>0.1";
    let installed = assess_condition(&kb, "thermostat", &today).installed.unwrap();
    vec![
        ("M2".into(), listing("m2-gmr.frames")),
        ("assessment".into(), assess_condition(&kb, "thermostat", &today).gmr),
        (
            "condition ok".into(),
            assess_condition(&kb, "thermostat", &installed).gmr,
        ),
        (
            "no record".into(),
            assess_condition(&kb, "thermostat", "2000-01-01").gmr,
        ),
        (
            "ask features".into(),
            act(
                "REQUEST-INFO",
                &format!("  theme #THERMOSTAT.1\n#THERMOSTAT.1\n  age {age}\n  property features\n"),
            ),
        ),
        (
            "ask location".into(),
            act(
                "REQUEST-INFO",
                &format!("  theme #THERMOSTAT.1\n#THERMOSTAT.1\n  age {age}\n  property location\n"),
            ),
        ),
        (
            "acknowledge".into(),
            act(
                "ACKNOWLEDGE",
                "  theme #THERMOSTAT.1\n#THERMOSTAT.1\n  label thermostat-new\n",
            ),
        ),
        (
            "delivered".into(),
            act(
                "REPORT-DELIVERED",
                &format!("  theme #THERMOSTAT.1\n#THERMOSTAT.1\n  age {age}\n"),
            ),
        ),
        ("clarification".into(), act("REQUEST-CLARIFICATION", "")),
        (
            "inability".into(),
            act("REPORT-INABILITY", "  reason \"reach the stores\"\n"),
        ),
    ]
}

#[test]
fn generated_utterances_are_understood_back_to_the_same_skeleton() {
    for (name, gmr) in fixture_gmrs() {
        let text = gmr_to_utterance(&gmr).unwrap_or_else(|e| panic!("{name}: {e}"));
        let tmr = utterance_to_tmr(&text, &EmptyScene, 0).unwrap_or_else(|e| panic!("{name}: `{text}`: {e}"));
        assert_eq!(tmr.skeleton(), gmr.skeleton(), "{name}: `{text}`");
    }
}

fn modalities(doc: &FrameDocument) -> impl Iterator<Item = f64> + '_ {
    doc.frames
        .iter()
        .filter(|f| f.concept() == "MODALITY")
        .filter_map(|f| f.get("value").and_then(Filler::as_number))
}

#[test]
fn fixture_modalities_are_probabilities() {
    let m1 = listing("m1-tmr.frames");
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/listings/plan-1.frames");
    let plan = parse_frames_with(
        &std::fs::read_to_string(path).unwrap(),
        &ParseOptions::default().with_context(&m1),
    )
    .unwrap();
    let mut seen = 0;
    for doc in [m1, plan, listing("m2-gmr.frames"), listing("m5-tmr.frames")] {
        for v in modalities(&doc) {
            assert!((0.0..=1.0).contains(&v));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}

#[test]
fn range_bounds_must_be_ordered() {
    assert!(parse_frames("#A.1\n  age 0.5<>0.1\n").is_err());
    assert!(parse_frames("#A.1\n  age 0.1<>0.1\n").is_ok());
}
