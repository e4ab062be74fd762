use std::sync::Arc;

use proptest::prelude::*;

use harmonic_core::coding::{code_trial, GroundTruth};
use harmonic_core::dialogue::ScriptedPartner;
use harmonic_core::kb::fixture_knowledge;
use harmonic_core::llm::synthetic::SyntheticProvider;
use harmonic_core::llm::{Condition, LlmAgent};
use harmonic_core::report::{aggregate_report, CodedTrial, MetricKind};
use harmonic_core::runner::run_trial;
use harmonic_core::sim::ScenarioFixture;
use harmonic_core::transcript::{Payload, TrialTranscript};

mod common;
use common::knobs;

fn synthetic_trial(
    k: harmonic_core::llm::synthetic::Knobs,
    c: Condition,
    latency: u64,
    budget: u64,
) -> TrialTranscript {
    let fixture = ScenarioFixture::canonical();
    let provider = SyntheticProvider::with_knobs(k);
    let mut agent =
        LlmAgent::new("probe", c, Box::new(provider), Arc::new(fixture_knowledge()), &fixture).with_latency(latency);
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    run_trial(&mut agent, &fixture, &mut partner, 0, budget, &mut |_| {})
}

fn trial_inputs() -> impl Strategy<Value = (harmonic_core::llm::synthetic::Knobs, Condition, u64, u64)> {
    (
        knobs(),
        prop_oneof![Just(Condition::IK), Just(Condition::KE)],
        0u64..3,
        60u64..300,
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transcripts_are_well_formed_and_serialize_canonically((k, c, latency, budget) in trial_inputs()) {
        let t = synthetic_trial(k, c, latency, budget);
        prop_assert!(t.validate().is_ok(), "{:?}", t.validate());
        prop_assert!(t.events.windows(2).all(|w| w[0].tick <= w[1].tick));
        for (i, e) in t.events.iter().enumerate() {
            if let Payload::Command { id, .. } = e.payload {
                let later = t.events[i + 1..]
                    .iter()
                    .filter(|o| matches!(o.payload, Payload::Outcome { id: oid, .. } if oid == id))
                    .count();
                prop_assert_eq!(later, 1, "command {} has {} outcomes", id, later);
            }
        }
        let text = t.to_jsonl();
        let back = TrialTranscript::from_jsonl(&text, "probe").unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn codings_are_consistent((k, c, latency, budget) in trial_inputs()) {
        let t = synthetic_trial(k, c, latency, budget);
        let gt = GroundTruth::canonical();
        let coding = code_trial(&t, &gt).unwrap();
        prop_assert_eq!(&code_trial(&t, &gt).unwrap(), &coding);
        if coding.cascade.is_some() {
            prop_assert!(!coding.correct_action);
        }
        if coding.task_completed {
            prop_assert!(coding.cascade.is_none());
        }
        for (proc, followed) in &coding.procedure_followed {
            prop_assert_eq!(followed.is_some(), coding.fetchplan_invoked[proc]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn report_cells_add_up(inputs in proptest::collection::vec(trial_inputs(), 1..8)) {
        let gt = GroundTruth::canonical();
        let coded: Vec<CodedTrial> = inputs
            .into_iter()
            .enumerate()
            .map(|(i, (k, c, latency, budget))| {
                let t = synthetic_trial(k, c, latency, budget);
                CodedTrial { name: format!("t{i}"), coding: code_trial(&t, &gt).unwrap(), header: t.header }
            })
            .collect();
        let report = aggregate_report(&coded);
        let total: usize = report.groups.iter().map(|(_, n)| n).sum();
        prop_assert_eq!(total, coded.len());
        for row in &report.rows {
            for (group, cell) in &row.cells {
                let n = report.groups.iter().find(|(g, _)| g == group).map(|(_, n)| *n);
                prop_assert_eq!(Some(cell.n), n);
                prop_assert!(cell.total >= 0.0);
                if row.kind == MetricKind::Binary {
                    prop_assert!(cell.total <= cell.n as f64);
                    prop_assert!((0.0..=1.0).contains(&cell.value));
                }
            }
        }
        let rows: usize = report.breakdowns.iter().map(|b| b.n).sum();
        prop_assert_eq!(rows, coded.len());
    }
}
