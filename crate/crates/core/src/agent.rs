//! The contract between a strategic layer and the trial runner. Both the
//! OntoAgent and the LLM agent implement [`StrategicAgent`].

use thiserror::Error;

use crate::command::Command;
use crate::tactical::{Grounding, PerceptionFrame};
use crate::transcript::{OutcomeStatus, Payload};

/// Completed command, reported back up.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionReport {
    pub id: u32,
    pub command: Command,
    pub status: OutcomeStatus,
    pub detail: Option<String>,
}

/// A search halted at a candidate and waits for a verdict.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateReport {
    pub object_id: String,
    /// VMR in frame notation.
    pub vmr: String,
}

/// Everything that reached the strategic layer since its previous step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentInput {
    pub tick: u64,
    pub frame: PerceptionFrame,
    pub utterances: Vec<String>,
    pub outcomes: Vec<ActionReport>,
    pub candidates: Vec<CandidateReport>,
}

impl AgentInput {
    pub fn is_quiet(&self) -> bool {
        self.utterances.is_empty() && self.outcomes.is_empty() && self.candidates.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AgentOutput {
    Say(String),
    Command(Command),
    Verdict {
        object_id: String,
        matched: bool,
    },
    /// Transcript-only record: reasoning, tool, exchange, waiting, schema
    /// error.
    Log(Payload),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("recording exhausted at exchange {0}")]
    Exhausted(u32),
    #[error("recording mismatch at exchange {index}: {message}")]
    Mismatch { index: u32, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentIdentity {
    pub agent: String,
    pub model: Option<String>,
    pub condition: Option<String>,
}

pub trait StrategicAgent {
    fn identity(&self) -> AgentIdentity;
    /// Ticks between a step and the release of its outputs.
    fn latency(&self) -> u64;
    /// How the tactical search confirms candidates for this agent.
    fn grounding(&self) -> Grounding;
    fn step(&mut self, input: &AgentInput) -> Result<Vec<AgentOutput>, AgentError>;
    /// Nothing left to do unless new input arrives.
    fn is_idle(&self) -> bool;
}
