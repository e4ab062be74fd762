//! The trial loop. Each tick: perceive, release partner turns, step the
//! strategic agent (its outputs land after its latency), tick the tactical
//! controller, then integrate the world.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::agent::{ActionReport, AgentInput, AgentOutput, CandidateReport, StrategicAgent};
use crate::command::{Command, CommandName};
use crate::dialogue::{DialogueSource, ScriptedPartner};
use crate::kb::KnowledgeBase;
use crate::llm::LlmAgent;
use crate::sim::{ScenarioFixture, World};
use crate::tactical::{Controller, PerceptionFrame, SkillState, StatusDetail};
use crate::transcript::{Event, OutcomeStatus, Payload, Speaker, TranscriptHeader, TranscriptWriter, TrialTranscript};

/// Perception is logged when the robot has moved this far since the last
/// logged frame, or when anything else in the frame changes.
pub const PERCEPTION_LOG_STEP: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Mode {
    /// Parallel when compiled with the `parallel` feature.
    pub fn default_for_build() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn perception_changed(last: Option<&PerceptionFrame>, now: &PerceptionFrame) -> bool {
    let Some(last) = last else { return true };
    let ids = |f: &PerceptionFrame| {
        f.detections
            .iter()
            .map(|d| (d.object_id.clone(), d.label.clone()))
            .collect::<Vec<_>>()
    };
    last.pos().dist(now.pos()) >= PERCEPTION_LOG_STEP
        || last.zone != now.zone
        || last.collision != now.collision
        || last.gripper != now.gripper
        || ids(last) != ids(now)
        || (last.speed == 0.0) != (now.speed == 0.0)
}

#[derive(Default)]
struct Pending {
    utterances: Vec<String>,
    outcomes: Vec<ActionReport>,
    candidates: Vec<CandidateReport>,
}

struct Trial<'a> {
    world: World,
    ctl: Controller,
    transcript: TrialTranscript,
    sink: &'a mut dyn FnMut(&Event),
    partner: &'a mut dyn DialogueSource,
    pending: Pending,
    open: Option<(u32, Command)>,
    next_id: u32,
    candidate: Option<String>,
}

impl Trial<'_> {
    fn emit(&mut self, tick: u64, payload: Payload) {
        let e = Event::new(tick, payload);
        (self.sink)(&e);
        self.transcript.events.push(e);
    }

    fn close(&mut self, tick: u64, status: OutcomeStatus, detail: Option<String>) {
        if let Some((id, command)) = self.open.take() {
            self.emit(
                tick,
                Payload::Outcome {
                    id,
                    status,
                    detail: detail.clone(),
                },
            );
            self.pending.outcomes.push(ActionReport {
                id,
                command,
                status,
                detail,
            });
            self.candidate = None;
        }
    }

    fn release(&mut self, tick: u64, outputs: Vec<AgentOutput>) {
        for o in outputs {
            match o {
                AgentOutput::Say(text) => {
                    self.emit(
                        tick,
                        Payload::Utterance {
                            speaker: Speaker::Agent,
                            text: text.clone(),
                            turn: None,
                        },
                    );
                    self.partner.observe_agent(&text, tick);
                }
                AgentOutput::Command(command) => {
                    self.close(
                        tick,
                        OutcomeStatus::Preempted,
                        Some(format!("preempted by {}", command.name)),
                    );
                    let id = self.next_id;
                    self.next_id += 1;
                    self.emit(
                        tick,
                        Payload::Command {
                            id,
                            command: command.clone(),
                        },
                    );
                    let decoded = self.ctl.decode_command(&command, &self.world, tick);
                    let is_stop = command.name == CommandName::Stop;
                    self.open = Some((id, command));
                    match decoded {
                        Err(e) => self.close(tick, OutcomeStatus::Rejected, Some(e.to_string())),
                        Ok(()) if is_stop => self.close(tick, OutcomeStatus::Succeeded, Some("stopped".into())),
                        Ok(()) => {}
                    }
                }
                AgentOutput::Verdict { object_id, matched } => {
                    if self.candidate.as_deref() == Some(object_id.as_str()) {
                        self.ctl.deliver_verdict(matched);
                    }
                }
                AgentOutput::Log(p) => self.emit(tick, p),
            }
        }
    }

    fn track_status(&mut self, tick: u64) {
        if self.open.is_none() {
            return;
        }
        let status = self.ctl.status().clone();
        match status.state {
            SkillState::Succeeded | SkillState::Failed => {
                let ok = status.state == SkillState::Succeeded;
                let detail = status.detail.map(|d| match d {
                    StatusDetail::Failure { reason } => reason,
                    StatusDetail::Note { text } => text,
                    StatusDetail::Candidate { object_id, .. } => object_id,
                });
                self.close(
                    tick,
                    if ok {
                        OutcomeStatus::Succeeded
                    } else {
                        OutcomeStatus::Failed
                    },
                    detail,
                );
            }
            SkillState::Running => match status.detail {
                Some(StatusDetail::Candidate { object_id, vmr }) => {
                    if self.candidate.as_deref() != Some(object_id.as_str()) {
                        self.candidate = Some(object_id.clone());
                        self.pending.candidates.push(CandidateReport { object_id, vmr });
                    }
                }
                _ => self.candidate = None,
            },
            SkillState::Idle => {}
        }
    }
}

pub fn header_for(agent: &dyn StrategicAgent, fixture: &ScenarioFixture, seed: u64, budget: u64) -> TranscriptHeader {
    let id = agent.identity();
    TranscriptHeader {
        agent: id.agent,
        model: id.model,
        condition: id.condition,
        seed,
        fixture_version: fixture.version.clone(),
        latency: agent.latency(),
        budget,
    }
}

/// Runs one trial to delivery or the tick budget. `sink` sees every event
/// as it is recorded.
pub fn run_trial(
    agent: &mut dyn StrategicAgent,
    fixture: &Arc<ScenarioFixture>,
    partner: &mut dyn DialogueSource,
    seed: u64,
    budget: u64,
    sink: &mut dyn FnMut(&Event),
) -> TrialTranscript {
    let header = header_for(agent, fixture, seed, budget);
    let mut trial = Trial {
        world: World::spawn(fixture.clone(), seed),
        ctl: Controller::new(agent.grounding()),
        transcript: TrialTranscript::new(header),
        sink,
        partner,
        pending: Pending::default(),
        open: None,
        next_id: 0,
        candidate: None,
    };
    let latency = agent.latency();
    let mut inflight: Option<(u64, Vec<AgentOutput>)> = None;
    let mut logged: Option<PerceptionFrame> = None;
    let mut ticks = budget;
    for t in 0..budget {
        let frame = trial.ctl.perceive(&trial.world, t);
        if perception_changed(logged.as_ref(), &frame) {
            trial.emit(t, Payload::Perception { frame: frame.clone() });
            logged = Some(frame.clone());
        }
        for turn in trial.partner.poll(t) {
            trial.emit(
                t,
                Payload::Utterance {
                    speaker: Speaker::Human,
                    text: turn.text.clone(),
                    turn: turn.id,
                },
            );
            trial.pending.utterances.push(turn.text);
        }
        if inflight.as_ref().is_some_and(|(due, _)| *due <= t) {
            let (_, outs) = inflight.take().unwrap();
            trial.release(t, outs);
        }
        if inflight.is_none() {
            let pending = std::mem::take(&mut trial.pending);
            let input = AgentInput {
                tick: t,
                frame,
                utterances: pending.utterances,
                outcomes: pending.outcomes,
                candidates: pending.candidates,
            };
            match agent.step(&input) {
                Ok(outs) if latency == 0 => trial.release(t, outs),
                Ok(outs) => inflight = Some((t + latency, outs)),
                Err(e) => {
                    trial.emit(t, Payload::Abort { reason: e.to_string() });
                    trial.close(t, OutcomeStatus::Failed, Some("aborted".into()));
                    ticks = t + 1;
                    break;
                }
            }
        }
        let (act, _) = trial.ctl.tick(&mut trial.world, t);
        trial.track_status(t);
        trial.world.step(&act);
        let settled = inflight
            .as_ref()
            .is_none_or(|(_, outs)| outs.iter().all(|o| matches!(o, AgentOutput::Log(_))));
        let finished = trial.world.is_delivered() || trial.partner.hung_up();
        if finished && trial.open.is_none() && settled && agent.is_idle() {
            if let Some((_, outs)) = inflight.take() {
                trial.release(t, outs);
            }
            ticks = t + 1;
            break;
        }
    }
    let end = ticks.saturating_sub(1);
    // Effects still in flight never land, but their records were made.
    for out in inflight.into_iter().flat_map(|(_, outs)| outs) {
        if let AgentOutput::Log(p) = out {
            trial.emit(end, p);
        }
    }
    trial.close(end, OutcomeStatus::Preempted, Some("trial ended".into()));
    let delivered = trial.world.is_delivered();
    trial.emit(end, Payload::TrialEnd { delivered, ticks });
    trial.transcript
}

/// File name for a trial transcript.
pub fn transcript_name(header: &TranscriptHeader, trial: u32) -> String {
    let mut parts = vec![header.agent.clone()];
    parts.extend(header.model.clone());
    parts.extend(header.condition.clone());
    parts.push(format!("s{}", header.seed));
    parts.push(format!("t{trial:03}"));
    format!("{}.jsonl", parts.join("-"))
}

/// Creates the agent for a trial index.
pub type AgentFactory<'a> = dyn Fn(u32) -> Result<Box<dyn StrategicAgent + Send>, RunError> + Sync + 'a;

fn one(
    make: &AgentFactory<'_>,
    fixture: &Arc<ScenarioFixture>,
    trial: u32,
    seed: u64,
    budget: u64,
    out_dir: Option<&Path>,
) -> Result<TrialTranscript, RunError> {
    let mut agent = make(trial)?;
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    let Some(dir) = out_dir else {
        return Ok(run_trial(
            agent.as_mut(),
            fixture,
            &mut partner,
            seed,
            budget,
            &mut |_| {},
        ));
    };
    let header = header_for(agent.as_ref(), fixture, seed, budget);
    let path = dir.join(transcript_name(&header, trial));
    let io = |source| RunError::Io {
        path: path.clone(),
        source,
    };
    let mut writer = TranscriptWriter::create(&path, &header).map_err(io)?;
    let mut failure = None;
    let t = run_trial(agent.as_mut(), fixture, &mut partner, seed, budget, &mut |e| {
        if failure.is_none() {
            failure = writer.append(e).err();
        }
    });
    match failure {
        Some(e) => Err(io(e)),
        None => Ok(t),
    }
}

/// Runs `trials` independent trials. Every trial uses the same world seed;
/// agents that vary between trials get the trial index from the factory.
pub fn run_trials(
    make: &AgentFactory<'_>,
    fixture: &Arc<ScenarioFixture>,
    trials: u32,
    seed: u64,
    budget: u64,
    mode: Mode,
    out_dir: Option<&Path>,
) -> Result<Vec<TrialTranscript>, RunError> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            (0..trials)
                .into_par_iter()
                .map(|i| one(make, fixture, i, seed, budget, out_dir))
                .collect()
        }
        _ => (0..trials)
            .map(|i| one(make, fixture, i, seed, budget, out_dir))
            .collect(),
    }
}

/// Re-runs a recorded LLM trial with its recorded seed, budget and latency,
/// answering every provider call from the recording.
pub fn replay_trial(
    recording: &TrialTranscript,
    fixture: &Arc<ScenarioFixture>,
    kb: Arc<KnowledgeBase>,
) -> Result<TrialTranscript, RunError> {
    let h = &recording.header;
    if h.fixture_version != fixture.version {
        return Err(RunError::Config(format!(
            "recording was made against fixture {}, not {}",
            h.fixture_version, fixture.version
        )));
    }
    let mut agent = LlmAgent::replaying(recording, kb, fixture)?;
    let mut partner = ScriptedPartner::new(fixture.turns.clone(), fixture.reply_delay);
    Ok(run_trial(
        &mut agent,
        fixture,
        &mut partner,
        h.seed,
        h.budget,
        &mut |_| {},
    ))
}
