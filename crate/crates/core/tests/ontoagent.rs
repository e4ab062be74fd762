use std::sync::Arc;

use proptest::prelude::*;

use harmonic_core::coding::{code_trial, premature_commands, GroundTruth};
use harmonic_core::dialogue::ScriptedPartner;
use harmonic_core::frames::templates::build_alternative;
use harmonic_core::frames::{Filler, FrameDocument, FrameId, FrameInstance};
use harmonic_core::kb::fixture_knowledge;
use harmonic_core::ontoagent::{diagnose, OntoAgent, SituationModel};
use harmonic_core::runner::run_trial;
use harmonic_core::sim::ScenarioFixture;
use harmonic_core::transcript::{Speaker, TrialTranscript};

fn modality_values(gmr: &FrameDocument) -> Vec<f64> {
    gmr.frames
        .iter()
        .filter(|f| f.concept() == "MODALITY")
        .filter_map(|f| f.get("value").and_then(Filler::as_number))
        .collect()
}

fn onto_trial(latency: u64, seed: u64) -> TrialTranscript {
    let fixture = ScenarioFixture::canonical();
    let mut agent = OntoAgent::new(Arc::new(fixture_knowledge()), &fixture).with_latency(latency);
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    run_trial(
        &mut agent,
        &fixture,
        &mut partner,
        seed,
        fixture.kinematics.budget,
        &mut |_| {},
    )
}

#[test]
fn every_hypothesis_traces_to_a_cause_link() {
    let kb = fixture_knowledge();
    let names: Vec<&str> = kb.concepts.iter().map(|c| c.name.as_str()).collect();
    let mut diagnosed = 0;
    for symptom in &names {
        for theme in &names {
            let mut situation = SituationModel::new();
            let id = situation.add(theme, vec![], 0);
            let frame = FrameInstance::new(FrameId::new(*symptom, 1)).with("theme", Filler::Instance(id));
            let Ok(d) = diagnose(&kb, &frame, &situation) else {
                continue;
            };
            let values = modality_values(&d.gmr);
            assert_eq!(values.len(), d.cause_ids.len(), "{symptom}/{theme}");
            for id in &d.cause_ids {
                let link = kb.cause_link(id).expect("cause id resolves");
                assert_eq!(link.symptom, *symptom);
            }
            if !values.is_empty() {
                assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                diagnosed += 1;
            }
        }
    }
    assert!(diagnosed > 0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn alternatives_split_belief_uniformly(concepts in proptest::collection::vec("[A-Z]{1,6}", 1..9)) {
        let causes: Vec<FrameInstance> = concepts.iter().map(|c| FrameInstance::new(FrameId::new(c.clone(), 1))).collect();
        let gmr = build_alternative(&causes);
        let values = modality_values(&gmr);
        prop_assert_eq!(values.len(), causes.len());
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert_eq!(gmr.frames.iter().filter(|f| f.concept() == "ALTERNATIVE").count(), usize::from(causes.len() > 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn reference_agent_never_acts_early_or_asks_twice(latency in 0u64..3, seed in any::<u64>()) {
        let t = onto_trial(latency, seed);
        prop_assert!(t.validate().is_ok());
        let gt = GroundTruth::canonical();
        prop_assert!(premature_commands(&t, &gt).is_empty());
        let c = code_trial(&t, &gt).unwrap();
        prop_assert!(c.task_completed);
        let mut questions: Vec<&str> = t
            .utterances()
            .filter(|(_, s, text)| *s == Speaker::Agent && text.trim_end().ends_with('?'))
            .map(|(_, _, text)| text)
            .collect();
        let n = questions.len();
        questions.sort_unstable();
        questions.dedup();
        prop_assert_eq!(questions.len(), n, "repeated question");
        prop_assert_eq!(onto_trial(latency, seed).to_jsonl(), t.to_jsonl());
    }
}
