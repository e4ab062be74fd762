//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every line is printed whether the
//! check passes or not; the process exits nonzero if any check fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use harmonic_core::agent::StrategicAgent;
use harmonic_core::coding::{code_trial, premature_commands, CascadeClass, GroundTruth, MetricCoding};
use harmonic_core::command::CommandName;
use harmonic_core::frames::{parse_frames, parse_frames_with, render_frames, FrameDocument, FrameId, ParseOptions};
use harmonic_core::kb::fixture_knowledge;
use harmonic_core::ontoagent::{diagnose, OntoAgent, SituationModel};
use harmonic_core::report::{aggregate_report, code_dir, CodedTrial};
use harmonic_core::runner::{replay_trial, run_trials, Mode, RunError};
use harmonic_core::sim::{ScenarioFixture, World};
use harmonic_core::stats::{cohens_h, fisher_exact, mann_whitney_u, ContingencyTable};
use harmonic_core::tactical::{go_to_object_trial, GoTo};
use harmonic_core::transcript::{read_dir, Speaker, TrialTranscript};

mod common;
use common::{arb_document, fetch_commands_before_label, fisher_oracle, mwu_oracle};

type Check = Result<String, String>;

/// Label of the object to fetch.
const LABEL: &str = "thermostat-new";

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn listing(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/listings")
        .join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn ontoagent_trials(n: u32) -> Result<Vec<TrialTranscript>, RunError> {
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());
    let f = fixture.clone();
    let make =
        move |_| -> Result<Box<dyn StrategicAgent + Send>, RunError> { Ok(Box::new(OntoAgent::new(kb.clone(), &f))) };
    run_trials(
        &make,
        &fixture,
        n,
        0,
        fixture.kinematics.budget,
        Mode::default_for_build(),
        None,
    )
}

fn reference_coding(c: &MetricCoding) -> Result<(), String> {
    ensure(!c.premature_action, "premature action")?;
    ensure(!c.hallucinated_features, "hallucinated features")?;
    ensure(c.domain_first, "not domain-first")?;
    ensure(
        c.hallucinated_facts == 0,
        format!("{} hallucinated facts", c.hallucinated_facts),
    )?;
    ensure(c.correct_action, "first stores command was not SEARCH")?;
    ensure(c.cascade.is_none(), "cascade failure")?;
    ensure(c.task_completed, "task not completed")
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let trials = ontoagent_trials(5).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let gt = GroundTruth::canonical();
    let first = trials[0].to_jsonl();
    ensure(trials.iter().all(|t| t.to_jsonl() == first), "transcripts differ")?;
    let t = &trials[0];

    let turns: Vec<(Speaker, Option<String>)> = t
        .events
        .iter()
        .filter_map(|e| match &e.payload {
            harmonic_core::transcript::Payload::Utterance { speaker, turn, .. } => Some((*speaker, turn.clone())),
            _ => None,
        })
        .collect();
    let h = |id: &str| (Speaker::Human, Some(id.to_string()));
    let a = (Speaker::Agent, None);
    let expected = vec![
        h("M1"),
        a.clone(),
        h("M3"),
        a.clone(),
        h("M5"),
        a.clone(),
        h("M7"),
        a.clone(),
        a,
    ];
    ensure(turns == expected, format!("dialogue turns {turns:?}"))?;

    let commands: Vec<String> = t.commands().map(|(_, _, c)| c.to_string()).collect();
    let names: Vec<CommandName> = t.commands().map(|(_, _, c)| c.name).collect();
    ensure(
        names
            == [
                CommandName::Search,
                CommandName::Pickup,
                CommandName::Waypoint,
                CommandName::Dropobject,
            ],
        format!("commands {commands:?}"),
    )?;
    let wp = t
        .commands()
        .nth(2)
        .and_then(|(_, _, c)| c.param("waypoint").map(str::to_string));
    ensure(
        wp.as_deref() == Some("daniel-location"),
        "return waypoint is not daniel-location",
    )?;
    ensure(t.trial_end().is_some_and(|(d, _)| d), "not delivered")?;

    for t in &trials {
        let c = code_trial(t, &gt).map_err(|e| e.to_string())?;
        reference_coding(&c)?;
    }
    let coded: Vec<CodedTrial> = trials
        .iter()
        .map(|t| CodedTrial {
            name: "ref".into(),
            header: t.header.clone(),
            coding: code_trial(t, &gt).unwrap(),
        })
        .collect();
    let report = aggregate_report(&coded);
    let cell = |key: &str| {
        report
            .rows
            .iter()
            .find(|r| r.key == key)
            .and_then(|r| r.cells.get("Ref. OA"))
            .map(|c| c.value)
    };
    let want = [
        ("premature_action", 0.0),
        ("hallucinated_features", 0.0),
        ("domain_first", 1.0),
        ("hallucinated_facts", 0.0),
        ("correct_action", 1.0),
        ("cascade_failure", 0.0),
        ("task_completed", 1.0),
    ];
    for (key, v) in want {
        ensure(
            cell(key) == Some(v),
            format!("reference column {key} = {:?}", cell(key)),
        )?;
    }
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!(
        "5 identical trials, {} commands, {elapsed:.2?}",
        commands.len()
    ))
}

fn criterion_2() -> Check {
    let kb = fixture_knowledge();
    let tmr = parse_frames(&listing("m1-tmr.frames")).map_err(|e| e.to_string())?;
    let mut situation = SituationModel::new();
    let engine = situation.add("ENGINE", vec![], 0);
    let symptom = tmr
        .first_of("OVERHEAT")
        .cloned()
        .ok_or("no OVERHEAT frame in the M1 listing")?
        .with("theme", harmonic_core::frames::Filler::Instance(engine));
    let d = diagnose(&kb, &symptom, &situation).map_err(|e| e.to_string())?;
    let expected = parse_frames(&listing("m2-gmr.frames")).map_err(|e| e.to_string())?;
    let got = d.gmr.clone().strip_provenance().canonical_indices();
    ensure(
        got == expected.canonical_indices(),
        format!(
            "GMR differs:\n{}\nexpected:\n{}",
            render_frames(&got),
            render_frames(&expected)
        ),
    )?;
    Ok(format!("{} frames, causes {:?}", got.len(), d.cause_ids))
}

fn criterion_3() -> Check {
    let mut worst_search: f64 = 0.0;
    let mut min_overshoot = f64::INFINITY;
    for speed in [0.5, 1.0] {
        for latency in [1, 2, 3] {
            let world = || {
                let mut f = (*ScenarioFixture::canonical()).clone();
                f.kinematics.speed = speed;
                World::spawn(Arc::new(f), 0)
            };
            let mut w = world();
            let grasp = w.kin().grasp_radius;
            let wp = go_to_object_trial(&mut w, GoTo::WaypointThenStop, latency);
            ensure(
                wp.distance > grasp && !wp.pickup_ok,
                format!(
                    "v={speed} L={latency}: WAYPOINT+STOP halted {:.3} m from target",
                    wp.distance
                ),
            )?;
            let mut w = world();
            let s = go_to_object_trial(&mut w, GoTo::Search, latency);
            ensure(
                s.distance <= grasp && s.pickup_ok,
                format!("v={speed} L={latency}: SEARCH halted {:.3} m from target", s.distance),
            )?;
            min_overshoot = min_overshoot.min(wp.distance);
            worst_search = worst_search.max(s.distance);
        }
    }
    Ok(format!(
        "WAYPOINT+STOP halts >= {min_overshoot:.2} m away, SEARCH <= {worst_search:.2} m, over L in 1..=3 and v in {{0.5, 1.0}}"
    ))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let f = |x1, x2| fisher_exact(ContingencyTable::from_counts(x1, 30, x2, 30));
    let p = [f(30, 18), f(2, 21), f(17, 28), f(14, 25), f(13, 2)];
    ensure(p[0] < 0.001, format!("30/30 vs 18/30: p = {}", p[0]))?;
    ensure(p[1] < 0.001, format!("2/30 vs 21/30: p = {}", p[1]))?;
    ensure((p[2] - 0.002).abs() <= 0.001, format!("17/30 vs 28/30: p = {}", p[2]))?;
    ensure((p[3] - 0.006).abs() <= 0.002, format!("14/30 vs 25/30: p = {}", p[3]))?;
    ensure((p[4] - 0.002).abs() <= 0.001, format!("13/30 vs 2/30: p = {}", p[4]))?;
    let h1 = cohens_h(2.0 / 30.0, 21.0 / 30.0).unwrap().abs();
    let h2 = cohens_h(17.0 / 30.0, 28.0 / 30.0).unwrap().abs();
    ensure((h1 - 1.46).abs() <= 0.01, format!("h(2/30, 21/30) = {h1}"))?;
    ensure((h2 - 0.92).abs() <= 0.01, format!("h(17/30, 28/30) = {h2}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "p = {:.1e}, {:.1e}, {:.4}, {:.4}, {:.4}; |h| = {h1:.3}, {h2:.3}",
        p[0], p[1], p[2], p[3], p[4]
    ))
}

fn criterion_5() -> Check {
    let mut tables = 0;
    for n in 0..=16u64 {
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n - a - b {
                    let d = n - a - b - c;
                    let t = ContingencyTable::new(a, b, c, d);
                    let (p, q) = (fisher_exact(t), fisher_oracle(a, b, c, d));
                    ensure(
                        (p - q).abs() <= 1e-9,
                        format!("fisher {a} {b} {c} {d}: {p} vs oracle {q}"),
                    )?;
                    tables += 1;
                }
            }
        }
    }

    let mut runner = TestRunner::new(Config {
        cases: 600,
        failure_persistence: None,
        ..Config::default()
    });
    let sample = proptest::collection::vec(0u8..6, 1..=6);
    runner
        .run(&(sample.clone(), sample), |(a, b)| {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            let (u, p) = mwu_oracle(&a, &b);
            prop_assert!(r.exact);
            prop_assert!((r.u - u).abs() < 1e-9, "U {} vs {}", r.u, u);
            prop_assert!((r.p - p).abs() < 1e-9, "p {} vs {}", r.p, p);
            Ok(())
        })
        .map_err(|e| format!("mann-whitney: {e}"))?;

    runner
        .run(&(0.0..=1.0f64, 0.0..=1.0f64), |(p1, p2)| {
            prop_assert!((cohens_h(p1, p2).unwrap() + cohens_h(p2, p1).unwrap()).abs() < 1e-12);
            Ok(())
        })
        .map_err(|e| format!("cohen's h: {e}"))?;
    let pi = cohens_h(0.0, 1.0).unwrap();
    ensure((pi - std::f64::consts::PI).abs() < 1e-12, format!("h(0,1) = {pi}"))?;
    Ok(format!(
        "{tables} Fisher tables, 600 Mann-Whitney sample pairs, h antisymmetric"
    ))
}

fn criterion_6() -> Check {
    let dir = fixtures().join("labeled");
    let labels: BTreeMap<String, MetricCoding> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("labels.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let gt = GroundTruth::canonical();
    let trials = read_dir(&dir).map_err(|e| e.to_string())?;
    ensure(trials.len() >= 12, format!("only {} labeled transcripts", trials.len()))?;
    ensure(trials.len() == labels.len(), "labels and transcripts differ in number")?;
    for (name, t) in &trials {
        let want = labels.get(name).ok_or(format!("{name} has no label"))?;
        let got = code_trial(t, &gt).map_err(|e| format!("{name}: {e}"))?;
        ensure(&got == want, format!("{name}: coded {got:?}, labeled {want:?}"))?;
    }
    let classes: Vec<Option<CascadeClass>> = labels.values().map(|c| c.cascade).collect();
    for class in CascadeClass::ALL {
        ensure(classes.contains(&Some(class)), format!("no {} example", class.as_str()))?;
    }
    let flags: [Flag; 8] = [
        ("premature action", |c| c.premature_action),
        ("hallucinated features", |c| c.hallucinated_features),
        ("domain-first", |c| c.domain_first),
        ("hallucinated facts", |c| c.hallucinated_facts > 0),
        ("expressed uncertainty", |c| c.expressed_uncertainty),
        ("correct action", |c| c.correct_action),
        ("cascade", |c| c.cascade.is_some()),
        ("task completed", |c| c.task_completed),
    ];
    for (name, f) in flags {
        let set: Vec<bool> = labels.values().map(f).collect();
        ensure(
            set.contains(&true) && set.contains(&false),
            format!("{name} lacks a polarity"),
        )?;
    }
    Ok(format!("{} transcripts agree with their labels", trials.len()))
}

fn criterion_7() -> Check {
    let dir = fixtures().join("recordings");
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());
    let gt = GroundTruth::canonical();
    let recordings = read_dir(&dir).map_err(|e| e.to_string())?;
    ensure(!recordings.is_empty(), "no recordings")?;
    let mut coded = Vec::new();
    for (name, rec) in &recordings {
        let replayed = replay_trial(rec, &fixture, kb.clone()).map_err(|e| format!("{name}: {e}"))?;
        let original = std::fs::read_to_string(dir.join(name)).map_err(|e| e.to_string())?;
        ensure(
            replayed.to_jsonl() == original,
            format!("{name}: replay differs from the recording"),
        )?;
        coded.push(CodedTrial {
            name: name.clone(),
            header: replayed.header.clone(),
            coding: code_trial(&replayed, &gt).map_err(|e| e.to_string())?,
        });
    }
    let report = aggregate_report(&coded);
    let golden = fixtures().join("golden");
    let text = std::fs::read_to_string(golden.join("report.txt")).map_err(|e| e.to_string())?;
    let json = std::fs::read_to_string(golden.join("report.json")).map_err(|e| e.to_string())?;
    ensure(report.to_text() == text, "text report differs from the golden file")?;
    ensure(report.to_json() == json, "JSON report differs from the golden file")?;
    let from_files = aggregate_report(&code_dir(&dir, &gt).map_err(|e| e.to_string())?);
    ensure(
        from_files.to_json() == json,
        "coding the stored recordings differs from the golden file",
    )?;
    Ok(format!(
        "{} recordings replay byte-for-byte; report matches golden",
        recordings.len()
    ))
}

fn criterion_8() -> Check {
    let m1 = parse_frames(&listing("m1-tmr.frames")).map_err(|e| format!("M1 TMR: {e}"))?;
    let plan = parse_frames_with(&listing("plan-1.frames"), &ParseOptions::default().with_context(&m1))
        .map_err(|e| format!("Plan.1: {e}"))?;
    let m2 = parse_frames(&listing("m2-gmr.frames")).map_err(|e| format!("M2 GMR: {e}"))?;
    let m5 = parse_frames(&listing("m5-tmr.frames")).map_err(|e| format!("M5 TMR: {e}"))?;
    let counts = [m1.len(), plan.len(), m2.len(), m5.len()];
    ensure(counts == [3, 1, 5, 2], format!("frame counts {counts:?}"))?;
    ensure(
        plan.frames[0].group.as_deref() == Some("Plan.1"),
        "plan frame is not grouped under Plan.1",
    )?;
    for doc in [&m1, &m2, &m5] {
        let again = parse_frames(&render_frames(doc)).map_err(|e| e.to_string())?;
        ensure(&again == doc, "listing does not round-trip")?;
    }

    let mut runner = TestRunner::new(Config {
        cases: 500,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&arb_document(), |doc: FrameDocument| {
            let text = render_frames(&doc);
            let back = parse_frames_with(
                &text,
                &ParseOptions {
                    externals: Vec::<FrameId>::new(),
                },
            );
            prop_assert_eq!(back.as_ref(), Ok(&doc), "text:\n{}", text);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} listings parse ({counts:?} frames); 500 generated documents round-trip",
        counts.len()
    ))
}

fn criterion_9() -> Check {
    let gt = GroundTruth::canonical();
    let mut checked = 0;
    for t in ontoagent_trials(5).map_err(|e| e.to_string())? {
        let early = premature_commands(&t, &gt);
        ensure(
            early.is_empty(),
            format!("OntoAgent commands {early:?} precede binding"),
        )?;
        let early = fetch_commands_before_label(&t, LABEL);
        ensure(
            early.is_empty(),
            format!("OntoAgent commands {early:?} precede the label"),
        )?;
        checked += 1;
    }
    let dir = fixtures().join("labeled");
    let labels: BTreeMap<String, MetricCoding> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("labels.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    for (name, t) in read_dir(&dir).map_err(|e| e.to_string())? {
        if labels.get(&name).is_some_and(|c| !c.premature_action) {
            let early = premature_commands(&t, &gt);
            ensure(early.is_empty(), format!("{name}: commands {early:?} precede binding"))?;
            let early = fetch_commands_before_label(&t, LABEL);
            ensure(
                early.is_empty(),
                format!("{name}: commands {early:?} precede the label"),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} compliant transcripts bind features and location before acting"
    ))
}

type CriterionFn = fn() -> Check;
type Flag = (&'static str, fn(&MetricCoding) -> bool);

fn main() {
    let criteria: [(&str, CriterionFn); 9] = [
        ("reference trace reproduction", criterion_1),
        ("diagnosis GMR structure", criterion_2),
        ("temporal validity of WAYPOINT+STOP vs SEARCH", criterion_3),
        ("statistics from reconstructed counts", criterion_4),
        ("statistics oracle equivalence", criterion_5),
        ("coder agreement with hand labels", criterion_6),
        ("recorded-fixture replay reproduces golden report", criterion_7),
        ("frame listing conformance and round trip", criterion_8),
        ("metacognitive ordering invariant", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {label} ({detail})"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {label}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {label}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
