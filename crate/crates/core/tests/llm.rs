use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use serde_json::{json, Value};

use harmonic_core::agent::AgentError;
use harmonic_core::coding::{code_trial, GroundTruth};
use harmonic_core::command::{Command, CommandName, ParamKind, ALL_COMMANDS};
use harmonic_core::dialogue::ScriptedPartner;
use harmonic_core::kb::{fixture_knowledge, KnowledgeBase};
use harmonic_core::llm::context::{ActionEntry, PromptContext};
use harmonic_core::llm::provider::{Provider, ProviderRequest};
use harmonic_core::llm::synthetic::{Knobs, SyntheticProvider};
use harmonic_core::llm::{narrative, tool_schemas, Condition, LlmAgent};
use harmonic_core::ontoagent::select_action;
use harmonic_core::runner::{replay_trial, run_trial};
use harmonic_core::sim::ScenarioFixture;
use harmonic_core::transcript::{Payload, ProviderResponse, TrialTranscript};

mod common;
use common::knobs;

const BUDGET: u64 = 240;

fn condition() -> impl Strategy<Value = Condition> {
    prop_oneof![Just(Condition::IK), Just(Condition::KE)]
}

fn trial(provider: Box<dyn Provider>, condition: Condition, latency: u64) -> TrialTranscript {
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());
    let mut agent = LlmAgent::new("probe", condition, provider, kb, &fixture).with_latency(latency);
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    run_trial(&mut agent, &fixture, &mut partner, 0, BUDGET, &mut |_| {})
}

/// Records every context the agent builds before delegating.
struct Spy {
    inner: SyntheticProvider,
    seen: Arc<Mutex<Vec<PromptContext>>>,
}

impl Provider for Spy {
    fn complete(&mut self, request: &ProviderRequest, context: &PromptContext) -> Result<ProviderResponse, AgentError> {
        self.seen.lock().unwrap().push(context.clone());
        self.inner.complete(request, context)
    }
}

/// Action history with outcomes erased: outcomes fill in later.
fn action_keys(ctx: &PromptContext) -> Vec<String> {
    ctx.actions
        .iter()
        .map(|a| match a {
            ActionEntry::Command { id, command, .. } => format!("{id} {command:?}"),
            other => format!("{other:?}"),
        })
        .collect()
}

fn abort_reason(t: &TrialTranscript) -> Option<&str> {
    t.events.iter().find_map(|e| match &e.payload {
        Payload::Abort { reason } => Some(reason.as_str()),
        _ => None,
    })
}

fn param_value(kind: ParamKind, name: &str) -> BoxedStrategy<String> {
    match (kind, name) {
        (_, "zone") => prop_oneof![Just("stores-zone".to_string()), Just("engine-room".to_string())].boxed(),
        (ParamKind::Ident, _) => "[a-z][a-z0-9-]{0,8}".boxed(),
        (ParamKind::Features, _) => "label:[a-z][a-z0-9-]{0,8}".boxed(),
        (ParamKind::GripperState, _) => prop_oneof![Just("open".to_string()), Just("close".to_string())].boxed(),
        (ParamKind::Count, _) => (1u32..100).prop_map(|n| n.to_string()).boxed(),
    }
}

/// A command name with schema-valid arguments, optional ones sometimes
/// left out.
fn command_call() -> impl Strategy<Value = (CommandName, Vec<(String, String)>)> {
    proptest::sample::select(ALL_COMMANDS.to_vec()).prop_flat_map(|c| {
        let params: Vec<BoxedStrategy<Option<(String, String)>>> = c
            .schema()
            .iter()
            .map(|p| {
                let name = p.name.to_string();
                let value = param_value(p.kind, p.name).prop_map(move |v| (name.clone(), v));
                if p.required {
                    value.prop_map(Some).boxed()
                } else {
                    proptest::option::of(value).boxed()
                }
            })
            .collect();
        (Just(c), params).prop_map(|(c, ps)| (c, ps.into_iter().flatten().collect()))
    })
}

#[test]
fn tool_surface_matches_the_command_schema() {
    for condition in [Condition::IK, Condition::KE] {
        let tools = tool_schemas(condition);
        let names: BTreeSet<&str> = tools.iter().map(|t| t.name.as_str()).collect();
        let commands: BTreeSet<&str> = ALL_COMMANDS.iter().map(|c| c.as_str()).collect();
        let extra: BTreeSet<&str> = names.difference(&commands).copied().collect();
        let expected: BTreeSet<&str> = match condition {
            Condition::IK => ["SEARCHLOGS"].into(),
            Condition::KE => ["SEARCHLOGS", "FETCHPLAN"].into(),
        };
        assert_eq!(extra, expected);
        assert!(commands.is_subset(&names));
        for c in ALL_COMMANDS {
            let tool = tools.iter().find(|t| t.name == c.as_str()).unwrap();
            let props: BTreeSet<&str> = tool.parameters["properties"]
                .as_object()
                .unwrap()
                .keys()
                .map(String::as_str)
                .collect();
            let schema: BTreeSet<&str> = c.schema().iter().map(|p| p.name).collect();
            assert_eq!(props, schema, "{c}");
            let required: BTreeSet<&str> = tool.parameters["required"]
                .as_array()
                .unwrap()
                .iter()
                .filter_map(Value::as_str)
                .collect();
            let schema_required: BTreeSet<&str> = c.schema().iter().filter(|p| p.required).map(|p| p.name).collect();
            assert_eq!(required, schema_required, "{c}");
        }
    }
}

#[test]
fn fetch_narrative_states_every_precondition_and_step() {
    let kb = fixture_knowledge();
    for (script, procedure) in [("fetch", "FETCH-OBJECT"), ("diagnose-mechanical-problem", "DIAGNOSE")] {
        let s = kb.script(script).unwrap();
        let text = narrative(procedure).unwrap();
        for p in &s.preconditions {
            assert!(text.contains(&p.subject), "{procedure} narrative omits {}", p.subject);
        }
        for step in &s.steps {
            assert!(
                text.contains(&step.name),
                "{procedure} narrative omits step {}",
                step.name
            );
        }
    }
    let fetch = narrative("FETCH-OBJECT").unwrap().to_lowercase();
    assert!(fetch.contains("before any physical action"));
}

#[test]
fn replay_reports_exhaustion_and_mismatch() {
    let provider = SyntheticProvider::with_knobs(Knobs::compliant());
    let original = trial(Box::new(provider), Condition::IK, 1);
    let fixture = ScenarioFixture::canonical();
    let kb = Arc::new(fixture_knowledge());

    let mut short = original.clone();
    let last = short
        .events
        .iter()
        .rposition(|e| matches!(e.payload, Payload::Exchange { .. }))
        .unwrap();
    short.events.truncate(last);
    let replayed = replay_trial(&short, &fixture, kb.clone()).unwrap();
    assert!(
        abort_reason(&replayed).unwrap().contains("exhausted"),
        "{:?}",
        abort_reason(&replayed)
    );

    let mut tampered = original.clone();
    for e in &mut tampered.events {
        if let Payload::Exchange { request_digest, .. } = &mut e.payload {
            *request_digest = "0".repeat(64);
            break;
        }
    }
    let replayed = replay_trial(&tampered, &fixture, kb.clone()).unwrap();
    assert!(abort_reason(&replayed).unwrap().contains("differs"));

    let mut foreign = original;
    foreign.header.agent = "ontoagent".into();
    assert!(replay_trial(&foreign, &fixture, kb).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn both_agents_emit_the_same_commands((name, params) in command_call()) {
        let kb: KnowledgeBase = fixture_knowledge();
        let args: serde_json::Map<String, Value> = params.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let from_llm = Command::from_tool_call(name.as_str(), &Value::Object(args)).unwrap();
        let gripper = (name == CommandName::Dropobject).then_some("held-thing");
        let from_onto = select_action(&kb, name.as_str(), &params, gripper).unwrap().command;
        prop_assert_eq!(from_llm, from_onto);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn context_history_only_grows(k in knobs(), c in condition(), latency in 0u64..3) {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let spy = Spy { inner: SyntheticProvider::with_knobs(k), seen: seen.clone() };
        trial(Box::new(spy), c, latency);
        let contexts = seen.lock().unwrap();
        prop_assert!(!contexts.is_empty());
        for w in contexts.windows(2) {
            prop_assert!(w[1].dialogue.starts_with(&w[0].dialogue));
            prop_assert!(action_keys(&w[1]).starts_with(&action_keys(&w[0])));
            prop_assert!(w[1].tools.starts_with(&w[0].tools));
        }
    }

    #[test]
    fn replay_reproduces_trial_and_coding(k in knobs(), c in condition(), latency in 0u64..3) {
        let original = trial(Box::new(SyntheticProvider::with_knobs(k)), c, latency);
        let fixture = ScenarioFixture::canonical();
        let replayed = replay_trial(&original, &fixture, Arc::new(fixture_knowledge())).unwrap();
        prop_assert_eq!(replayed.to_jsonl(), original.to_jsonl());
        let gt = GroundTruth::canonical();
        prop_assert_eq!(code_trial(&replayed, &gt).unwrap(), code_trial(&original, &gt).unwrap());
    }
}
