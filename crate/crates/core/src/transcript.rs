//! Trial transcripts: a header line followed by one JSON event per line.
//! Serialization uses fixed field order, so equal content gives equal bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::command::Command;
use crate::tactical::PerceptionFrame;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub agent: String,
    pub model: Option<String>,
    pub condition: Option<String>,
    pub seed: u64,
    pub fixture_version: String,
    pub latency: u64,
    /// Tick budget the trial ran under.
    pub budget: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Dialogue,
    Action,
    Outcome,
    Perception,
    Tool,
    Reasoning,
    Exchange,
}

impl Channel {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dialogue" => Channel::Dialogue,
            "action" => Channel::Action,
            "outcome" => Channel::Outcome,
            "perception" => Channel::Perception,
            "tool" => Channel::Tool,
            "reasoning" => Channel::Reasoning,
            "exchange" => Channel::Exchange,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Agent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeStatus {
    Succeeded,
    Failed,
    Preempted,
    /// The tactical layer could not decode the command.
    Rejected,
}

/// A tool call issued by the model that failed schema validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub arguments: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: Option<String>,
    pub tool_calls: Vec<ToolCall>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Payload {
    Utterance {
        speaker: Speaker,
        text: String,
        /// Scripted turn id for the human partner.
        turn: Option<String>,
    },
    Command {
        id: u32,
        command: Command,
    },
    Outcome {
        id: u32,
        status: OutcomeStatus,
        detail: Option<String>,
    },
    /// Model output that named a command but failed its schema.
    SchemaError {
        tool: String,
        error: String,
    },
    TrialEnd {
        delivered: bool,
        ticks: u64,
    },
    Abort {
        reason: String,
    },
    Perception {
        frame: PerceptionFrame,
    },
    Tool {
        name: String,
        arguments: Value,
        result: Value,
    },
    Reasoning {
        rule: String,
        cites: Vec<String>,
        note: String,
    },
    Waiting,
    Exchange {
        index: u32,
        model: String,
        request_digest: String,
        response: ProviderResponse,
    },
}

impl Payload {
    pub fn channel(&self) -> Channel {
        match self {
            Payload::Utterance { .. } => Channel::Dialogue,
            Payload::Command { .. } => Channel::Action,
            Payload::Outcome { .. }
            | Payload::SchemaError { .. }
            | Payload::TrialEnd { .. }
            | Payload::Abort { .. } => Channel::Outcome,
            Payload::Perception { .. } => Channel::Perception,
            Payload::Tool { .. } => Channel::Tool,
            Payload::Reasoning { .. } | Payload::Waiting => Channel::Reasoning,
            Payload::Exchange { .. } => Channel::Exchange,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    pub channel: Channel,
    pub payload: Payload,
}

impl Event {
    pub fn new(tick: u64, payload: Payload) -> Self {
        Self {
            tick,
            channel: payload.channel(),
            payload,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    /// One-line human rendering for inspection.
    pub fn render(&self) -> String {
        let body = match &self.payload {
            Payload::Utterance { speaker, text, turn } => {
                let who = match speaker {
                    Speaker::Human => "human",
                    Speaker::Agent => "agent",
                };
                match turn {
                    Some(t) => format!("{who} ({t}): {text}"),
                    None => format!("{who}: {text}"),
                }
            }
            Payload::Command { id, command } => format!("#{id} {command}"),
            Payload::Outcome { id, status, detail } => format!(
                "#{id} {:?}{}",
                status,
                detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default()
            )
            .to_lowercase(),
            Payload::SchemaError { tool, error } => format!("schema error in {tool}: {error}"),
            Payload::TrialEnd { delivered, ticks } => format!("trial end after {ticks} ticks, delivered={delivered}"),
            Payload::Abort { reason } => format!("aborted: {reason}"),
            Payload::Perception { frame } => frame.render(),
            Payload::Tool {
                name,
                arguments,
                result,
            } => format!("{name}({arguments}) -> {result}"),
            Payload::Reasoning { rule, cites, note } => format!("{rule} [{}] {note}", cites.join(", ")),
            Payload::Waiting => "waiting".into(),
            Payload::Exchange {
                index,
                model,
                request_digest,
                response,
            } => format!(
                "exchange {index} {model} {}.. text={:?} tools={}",
                &request_digest[..request_digest.len().min(12)],
                response.text.as_deref().unwrap_or(""),
                response.tool_calls.len()
            ),
        };
        format!(
            "{:>4} {:<10} {body}",
            self.tick,
            format!("{:?}", self.channel).to_lowercase()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialTranscript {
    pub header: TranscriptHeader,
    pub events: Vec<Event>,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("{file}: line {line}: {message}")]
    Malformed { file: String, line: usize, message: String },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrialTranscript {
    pub fn new(header: TranscriptHeader) -> Self {
        Self {
            header,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, tick: u64, payload: Payload) {
        self.events.push(Event::new(tick, payload));
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, file: &str) -> Result<Self, TranscriptError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let malformed = |line: usize, message: String| TranscriptError::Malformed {
            file: file.to_string(),
            line,
            message,
        };
        let (_, first) = lines.next().ok_or_else(|| malformed(1, "empty transcript".into()))?;
        let header: TranscriptHeader = serde_json::from_str(first).map_err(|e| malformed(1, e.to_string()))?;
        let mut events = Vec::new();
        for (i, l) in lines {
            let e: Event = serde_json::from_str(l).map_err(|e| malformed(i + 1, e.to_string()))?;
            if e.channel != e.payload.channel() {
                return Err(malformed(i + 1, "channel does not match payload".into()));
            }
            events.push(e);
        }
        let t = Self { header, events };
        t.validate().map_err(|m| malformed(0, m))?;
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self, TranscriptError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TranscriptError::Io {
            file: name.clone(),
            source,
        })?;
        Self::from_jsonl(&text, &name)
    }

    /// Ticks are non-decreasing and every action has exactly one later
    /// outcome.
    pub fn validate(&self) -> Result<(), String> {
        let mut last = 0;
        let mut open: BTreeMap<u32, usize> = BTreeMap::new();
        let mut closed: BTreeMap<u32, usize> = BTreeMap::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.tick < last {
                return Err(format!("event {i}: tick {} after {last}", e.tick));
            }
            last = e.tick;
            match &e.payload {
                Payload::Command { id, .. } => {
                    if open.insert(*id, i).is_some() || closed.contains_key(id) {
                        return Err(format!("event {i}: duplicate action id {id}"));
                    }
                }
                Payload::Outcome { id, .. } => {
                    if open.remove(id).is_none() {
                        return Err(format!("event {i}: outcome for unknown or closed action {id}"));
                    }
                    closed.insert(*id, i);
                }
                _ => {}
            }
        }
        match open.keys().next() {
            Some(id) => Err(format!("action {id} has no outcome")),
            None => Ok(()),
        }
    }

    pub fn trial_end(&self) -> Option<(bool, u64)> {
        self.events.iter().rev().find_map(|e| match e.payload {
            Payload::TrialEnd { delivered, ticks } => Some((delivered, ticks)),
            _ => None,
        })
    }

    pub fn commands(&self) -> impl Iterator<Item = (u64, u32, &Command)> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Command { id, command } => Some((e.tick, *id, command)),
            _ => None,
        })
    }

    pub fn utterances(&self) -> impl Iterator<Item = (u64, Speaker, &str)> {
        self.events.iter().filter_map(|e| match &e.payload {
            Payload::Utterance { speaker, text, .. } => Some((e.tick, *speaker, text.as_str())),
            _ => None,
        })
    }
}

/// Appends events to disk as they happen; a crash leaves a valid prefix.
pub struct TranscriptWriter {
    out: BufWriter<File>,
}

impl TranscriptWriter {
    pub fn create(path: &Path, header: &TranscriptHeader) -> std::io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", serde_json::to_string(header).expect("header serializes"))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, event: &Event) -> std::io::Result<()> {
        writeln!(self.out, "{}", event.to_line())?;
        self.out.flush()
    }
}

/// Reads every `*.jsonl` transcript in a directory, sorted by file name.
pub fn read_dir(dir: &Path) -> Result<Vec<(String, TrialTranscript)>, TranscriptError> {
    let io = |source| TranscriptError::Io {
        file: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            TrialTranscript::read(&p).map(|t| (name, t))
        })
        .collect()
}

/// First line only; for cheap filtering.
pub fn read_header(path: &Path) -> Result<TranscriptHeader, TranscriptError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|source| TranscriptError::Io {
        file: name.clone(),
        source,
    })?;
    let mut line = String::new();
    BufReader::new(file)
        .read_line(&mut line)
        .map_err(|source| TranscriptError::Io {
            file: name.clone(),
            source,
        })?;
    serde_json::from_str(&line).map_err(|e| TranscriptError::Malformed {
        file: name,
        line: 1,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::CommandName;

    fn header() -> TranscriptHeader {
        TranscriptHeader {
            agent: "ontoagent".into(),
            model: None,
            condition: None,
            seed: 0,
            fixture_version: "t".into(),
            latency: 0,
            budget: 10,
        }
    }

    #[test]
    fn round_trips_through_jsonl() {
        let mut t = TrialTranscript::new(header());
        t.push(
            0,
            Payload::Utterance {
                speaker: Speaker::Human,
                text: "hi".into(),
                turn: Some("M1".into()),
            },
        );
        t.push(
            1,
            Payload::Command {
                id: 0,
                command: Command::stop(),
            },
        );
        t.push(
            1,
            Payload::Outcome {
                id: 0,
                status: OutcomeStatus::Succeeded,
                detail: None,
            },
        );
        let text = t.to_jsonl();
        let back = TrialTranscript::from_jsonl(&text, "mem").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn action_without_outcome_is_invalid() {
        let mut t = TrialTranscript::new(header());
        t.push(
            0,
            Payload::Command {
                id: 3,
                command: Command::new(CommandName::Pickup, &[("object", "x")]).unwrap(),
            },
        );
        assert_eq!(t.validate(), Err("action 3 has no outcome".into()));
    }
}
