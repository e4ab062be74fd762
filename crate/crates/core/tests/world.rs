use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use harmonic_core::agent::{AgentError, AgentIdentity, AgentInput, AgentOutput, StrategicAgent};
use harmonic_core::command::{Command, CommandName};
use harmonic_core::dialogue::ScriptedPartner;
use harmonic_core::runner::run_trial;
use harmonic_core::sim::{Placement, ScenarioFixture, World};
use harmonic_core::tactical::{Controller, Grounding, SkillState, StatusDetail};
use harmonic_core::transcript::{Payload, Speaker};

fn command() -> impl Strategy<Value = Command> {
    let c = |name, params: &[(&str, &str)]| Command::new(name, params).unwrap();
    let nodes = [
        "start",
        "daniel-location",
        "stores-entry",
        "stores-zone",
        "stores-far",
        "stores-north",
        "stores-south",
    ];
    prop_oneof![
        proptest::sample::select(vec![
            "",
            "label:thermostat-new",
            "label:thermostat-old",
            "label:nothing"
        ])
        .prop_map(move |f| if f.is_empty() {
            c(
                CommandName::Search,
                &[("zone", "stores-zone"), ("object", "thermostat")],
            )
        } else {
            c(
                CommandName::Search,
                &[("zone", "stores-zone"), ("object", "thermostat"), ("features", f)],
            )
        }),
        proptest::sample::select(nodes.to_vec()).prop_map(move |n| c(CommandName::Waypoint, &[("waypoint", n)])),
        proptest::sample::select(vec!["thermostat", "thermostat-new", "thermostat-old"])
            .prop_map(move |o| c(CommandName::Pickup, &[("object", o)])),
        Just(c(CommandName::Dropobject, &[("location", "floor")])),
        proptest::sample::select(vec!["open", "close"]).prop_map(move |s| c(CommandName::Gripper, &[("state", s)])),
        Just(Command::stop()),
        (1u32..30).prop_map(move |n| c(CommandName::Randomwalk, &[("ticks", &n.to_string())])),
    ]
}

/// `(tick, command)` pairs, plus verdicts handed to searches in order.
fn script() -> impl Strategy<Value = (BTreeMap<u64, Command>, Vec<bool>, u64)> {
    (
        proptest::collection::btree_map(0u64..160, command(), 0..12),
        proptest::collection::vec(any::<bool>(), 8),
        any::<u64>(),
    )
}

/// Drives the tactical layer alone and returns the per-tick state hashes.
fn drive(commands: &BTreeMap<u64, Command>, verdicts: &[bool], seed: u64) -> Result<Vec<String>, TestCaseError> {
    let fixture = ScenarioFixture::canonical();
    let mut world = World::spawn(fixture.clone(), seed);
    let mut ctl = Controller::new(Grounding::Strategic);
    let mut verdicts = verdicts.iter().cycle();
    let mut hashes = Vec::new();
    let count = world.objects.len();
    for t in 0..200 {
        ctl.perceive(&world, t);
        if let Some(cmd) = commands.get(&t) {
            let _ = ctl.decode_command(cmd, &world, t);
        }
        if let Some(StatusDetail::Candidate { .. }) = &ctl.status().detail {
            ctl.deliver_verdict(*verdicts.next().unwrap());
        }
        let before = world.tick;
        let (act, status) = ctl.tick(&mut world, t);
        prop_assert!(status.skill == ctl.active() || status.state != SkillState::Running);
        world.step(&act);
        prop_assert_eq!(world.tick, before + 1);
        prop_assert_eq!(world.objects.len(), count);
        for o in &world.objects {
            let held = world.robot.gripper.as_deref() == Some(o.id.as_str());
            prop_assert_eq!(held, o.placement == Placement::Held, "{}", o.id);
        }
        hashes.push(world.state_hash());
    }
    let mut writers: BTreeMap<(u64, &str), _> = BTreeMap::new();
    for (tick, key, role) in ctl.bb.write_log() {
        let first = *writers.entry((*tick, *key)).or_insert(*role);
        prop_assert_eq!(first, *role, "{} written by two roles at tick {}", key, tick);
    }
    Ok(hashes)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tactical_runs_conserve_objects_and_repeat_exactly((commands, verdicts, seed) in script()) {
        let a = drive(&commands, &verdicts, seed)?;
        let b = drive(&commands, &verdicts, seed)?;
        prop_assert_eq!(a, b);
    }
}

/// Says one thing per human turn and never acts.
struct Echo {
    latency: u64,
    pending: usize,
}

impl StrategicAgent for Echo {
    fn identity(&self) -> AgentIdentity {
        AgentIdentity {
            agent: "echo".into(),
            model: None,
            condition: None,
        }
    }

    fn latency(&self) -> u64 {
        self.latency
    }

    fn grounding(&self) -> Grounding {
        Grounding::Local
    }

    fn step(&mut self, input: &AgentInput) -> Result<Vec<AgentOutput>, AgentError> {
        self.pending += input.utterances.len();
        if self.pending == 0 {
            return Ok(vec![]);
        }
        self.pending -= 1;
        Ok(vec![AgentOutput::Say("Understood.".into())])
    }

    fn is_idle(&self) -> bool {
        self.pending == 0
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn slow_deliberation_never_stalls_the_clock(latency in 0u64..400, budget in 1u64..300) {
        let fixture = ScenarioFixture::canonical();
        let mut agent = Echo { latency, pending: 0 };
        let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
        let t = run_trial(&mut agent, &fixture, &mut partner, 0, budget, &mut |_| {});
        prop_assert_eq!(t.trial_end(), Some((false, budget)));
        prop_assert!(t.validate().is_ok());
        let mut turns: Vec<&str> = t
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                Payload::Utterance { speaker: Speaker::Human, turn: Some(id), .. } => Some(id.as_str()),
                _ => None,
            })
            .collect();
        let n = turns.len();
        turns.sort_unstable();
        turns.dedup();
        prop_assert_eq!(turns.len(), n, "a scripted turn fired twice");
    }
}

#[test]
fn same_seed_same_world() {
    let f = ScenarioFixture::canonical();
    let mut a = World::spawn(Arc::clone(&f), 7);
    let mut b = World::spawn(f, 7);
    for _ in 0..5 {
        assert_eq!(a.random_unit(), b.random_unit());
    }
    assert_eq!(a.state_hash(), b.state_hash());
}
