//! Rewrites the committed LLM fixtures under `fixtures/`:
//!
//! * `recordings/`: synthetic-model trials whose exchanges replay offline,
//! * `golden/`: the report those recordings must reproduce,
//! * `labeled/`: transcripts with hand-written expected codings in
//!   `labeled/labels.json` (that file is maintained by hand, not here).
//!
//! Run with `cargo run -p harmonic-core --example regenerate_fixtures`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use harmonic_core::coding::GroundTruth;
use harmonic_core::command::{Command, CommandName};
use harmonic_core::dialogue::ScriptedPartner;
use harmonic_core::kb::{fixture_knowledge, KnowledgeBase};
use harmonic_core::llm::synthetic::{AfterFailure, FactError, Knobs, SyntheticProvider, SYNTHETIC_MODELS};
use harmonic_core::llm::{Condition, LlmAgent};
use harmonic_core::report::{aggregate_report, code_dir};
use harmonic_core::runner::{run_trial, run_trials, Mode};
use harmonic_core::sim::ScenarioFixture;
use harmonic_core::tactical::PerceptionFrame;
use harmonic_core::transcript::{OutcomeStatus, Payload, Speaker, TranscriptHeader, TrialTranscript};

/// Recorded trials per model and condition.
const TRIALS: u32 = 5;
/// Shorter than the scenario budget to keep recordings small.
const RECORDING_BUDGET: u64 = 240;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());

    let recordings = root.join("recordings");
    reset(&recordings)?;
    for model in SYNTHETIC_MODELS {
        for condition in [Condition::IK, Condition::KE] {
            let make = |trial: u32| -> Result<Box<dyn harmonic_core::agent::StrategicAgent + Send>, _> {
                let provider = SyntheticProvider::new(model, condition, 0, trial)?;
                Ok(Box::new(LlmAgent::new(
                    model,
                    condition,
                    Box::new(provider),
                    kb.clone(),
                    &fixture,
                ))
                    as Box<dyn harmonic_core::agent::StrategicAgent + Send>)
            };
            run_trials(
                &make,
                &fixture,
                TRIALS,
                0,
                RECORDING_BUDGET,
                Mode::Sequential,
                Some(&recordings),
            )?;
        }
    }

    let gt = GroundTruth::canonical();
    let report = aggregate_report(&code_dir(&recordings, &gt)?);
    let golden = root.join("golden");
    std::fs::create_dir_all(&golden)?;
    std::fs::write(golden.join("report.txt"), report.to_text())?;
    std::fs::write(golden.join("report.json"), report.to_json())?;

    let labeled = root.join("labeled");
    for entry in std::fs::read_dir(&labeled).into_iter().flatten() {
        let p = entry?.path();
        if p.extension().is_some_and(|x| x == "jsonl") {
            std::fs::remove_file(p)?;
        }
    }
    std::fs::create_dir_all(&labeled)?;
    for (name, condition, knobs) in labeled_knobs() {
        let t = knob_trial(&fixture, &kb, condition, knobs);
        std::fs::write(labeled.join(format!("{name}.jsonl")), t.to_jsonl())?;
    }
    std::fs::write(labeled.join("h01-waypoint-loop.jsonl"), waypoint_loop().to_jsonl())?;
    std::fs::write(
        labeled.join("h02-claimed-delivery.jsonl"),
        claimed_delivery().to_jsonl(),
    )?;
    Ok(())
}

fn reset(dir: &Path) -> std::io::Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)
}

fn knob_trial(
    fixture: &Arc<ScenarioFixture>,
    kb: &Arc<KnowledgeBase>,
    condition: Condition,
    knobs: Knobs,
) -> TrialTranscript {
    let provider = SyntheticProvider::with_knobs(knobs);
    let mut agent = LlmAgent::new("labeled", condition, Box::new(provider), kb.clone(), fixture);
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    run_trial(&mut agent, fixture, &mut partner, 0, RECORDING_BUDGET, &mut |_| {})
}

fn labeled_knobs() -> Vec<(&'static str, Condition, Knobs)> {
    let c = Knobs::compliant;
    vec![
        (
            "k01-compliant",
            Condition::KE,
            Knobs {
                retrieve_diagnose: true,
                retrieve_fetch: true,
                ..c()
            },
        ),
        (
            "k02-ask-location",
            Condition::IK,
            Knobs {
                ask_location: true,
                ..c()
            },
        ),
        (
            "k03-logs-first",
            Condition::IK,
            Knobs {
                hypothesis_first: false,
                hedge: false,
                ..c()
            },
        ),
        (
            "k04-replaced-claim",
            Condition::KE,
            Knobs {
                fact_error: Some(FactError::Replaced),
                schema_slip: true,
                ..c()
            },
        ),
        (
            "k05-colour-claim",
            Condition::IK,
            Knobs {
                fact_error: Some(FactError::Colour),
                ..c()
            },
        ),
        (
            "k06-invented-label",
            Condition::IK,
            Knobs {
                ask_features: false,
                invent_label: true,
                after_failure: AfterFailure::Recover,
                ..c()
            },
        ),
        (
            "k07-unverified-search",
            Condition::KE,
            Knobs {
                retrieve_fetch: true,
                ask_features: false,
                ..c()
            },
        ),
        (
            "k08-waypoint-loop",
            Condition::IK,
            Knobs {
                ask_features: false,
                use_search: false,
                hypothesis_first: false,
                hedge: false,
                after_failure: AfterFailure::Loop,
                ..c()
            },
        ),
        (
            "k09-claimed-success",
            Condition::IK,
            Knobs {
                ask_features: false,
                use_search: false,
                fact_error: Some(FactError::Months),
                after_failure: AfterFailure::ClaimSuccess,
                ..c()
            },
        ),
        (
            "k10-stall",
            Condition::KE,
            Knobs {
                retrieve_diagnose: true,
                ask_features: false,
                use_search: false,
                after_failure: AfterFailure::Stall,
                ..c()
            },
        ),
        (
            "k11-circling",
            Condition::IK,
            Knobs {
                ask_features: false,
                use_search: false,
                after_failure: AfterFailure::Circle,
                ..c()
            },
        ),
        (
            "k12-waypoint-recover",
            Condition::KE,
            Knobs {
                use_search: false,
                after_failure: AfterFailure::Recover,
                ..c()
            },
        ),
    ]
}

fn header(budget: u64) -> TranscriptHeader {
    TranscriptHeader {
        agent: "llm".into(),
        model: Some("handwritten".into()),
        condition: Some("ik".into()),
        seed: 0,
        fixture_version: ScenarioFixture::canonical().version.clone(),
        latency: 1,
        budget,
    }
}

fn frame(tick: u64, x: f64, y: f64, zone: &str, gripper: Option<&str>) -> Payload {
    Payload::Perception {
        frame: PerceptionFrame {
            tick,
            x,
            y,
            heading: 0.0,
            speed: 0.0,
            zone: Some(zone.into()),
            detections: vec![],
            collision: false,
            gripper: gripper.map(str::to_string),
        },
    }
}

fn human(text: &str, turn: &str) -> Payload {
    Payload::Utterance {
        speaker: Speaker::Human,
        text: text.into(),
        turn: Some(turn.into()),
    }
}

fn agent(text: &str) -> Payload {
    Payload::Utterance {
        speaker: Speaker::Agent,
        text: text.into(),
        turn: None,
    }
}

fn command(id: u32, name: CommandName, params: &[(&str, &str)]) -> Payload {
    Payload::Command {
        id,
        command: Command::new(name, params).expect("valid command"),
    }
}

fn outcome(id: u32, status: OutcomeStatus, detail: Option<&str>) -> Payload {
    Payload::Outcome {
        id,
        status,
        detail: detail.map(str::to_string),
    }
}

/// Logs first, then the same WAYPOINT(stores-zone) four times from a
/// standstill in the zone.
fn waypoint_loop() -> TrialTranscript {
    let mut t = TrialTranscript::new(header(60));
    t.push(0, frame(0, 2.0, 5.0, "engine-room", None));
    t.push(0, human("The engine is overheating.", "M1"));
    t.push(
        1,
        Payload::Tool {
            name: "SEARCHLOGS".into(),
            arguments: serde_json::json!({"query": "engine"}),
            result: serde_json::json!([]),
        },
    );
    t.push(2, agent("The thermostat is worn out and must be replaced."));
    t.push(3, human("Please fetch a new thermostat.", "M5"));
    t.push(4, agent("Going to the stores."));
    t.push(4, command(0, CommandName::Waypoint, &[("waypoint", "stores-zone")]));
    t.push(40, frame(40, 25.0, 5.0, "stores-zone", None));
    t.push(40, outcome(0, OutcomeStatus::Succeeded, None));
    for (k, id) in (1..4).enumerate() {
        let tick = 41 + 2 * k as u64;
        t.push(tick, command(id, CommandName::Waypoint, &[("waypoint", "stores-zone")]));
        t.push(tick + 1, outcome(id, OutcomeStatus::Succeeded, None));
    }
    t.push(
        59,
        Payload::TrialEnd {
            delivered: false,
            ticks: 60,
        },
    );
    t
}

/// A failed grasp followed by a completion claim with an empty gripper.
fn claimed_delivery() -> TrialTranscript {
    let mut t = TrialTranscript::new(header(80));
    t.push(0, frame(0, 2.0, 5.0, "engine-room", None));
    t.push(0, human("The engine is overheating.", "M1"));
    t.push(1, agent("It might be the thermostat."));
    t.push(2, human("Please fetch a new thermostat.", "M5"));
    t.push(3, command(0, CommandName::Waypoint, &[("waypoint", "stores-far")]));
    t.push(33, frame(33, 29.5, 5.0, "stores-zone", None));
    t.push(33, outcome(0, OutcomeStatus::Succeeded, None));
    t.push(34, command(1, CommandName::Pickup, &[("object", "thermostat")]));
    t.push(
        35,
        outcome(1, OutcomeStatus::Failed, Some("no thermostat within reach")),
    );
    t.push(36, agent("I found the red thermostat. Task complete."));
    t.push(
        79,
        Payload::TrialEnd {
            delivered: false,
            ticks: 80,
        },
    );
    t
}
