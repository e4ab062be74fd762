//! Prompt context: a pure function of the events the agent has seen.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::command::Command;
use crate::tactical::PerceptionFrame;
use crate::transcript::{Event, OutcomeStatus, Payload, Speaker};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActionEntry {
    Command {
        id: u32,
        command: Command,
        outcome: Option<(OutcomeStatus, Option<String>)>,
    },
    /// A call that failed its schema; the error is its outcome.
    Invalid { tool: String, error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub name: String,
    pub arguments: Value,
    pub result: Value,
}

/// An object the robot has seen, keyed by id with the first sighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub object_id: String,
    pub category: String,
    pub shape_class: String,
    /// Latest label read, if any.
    pub label: Option<String>,
    pub first_seen: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub system: String,
    pub dialogue: Vec<(Speaker, String)>,
    pub actions: Vec<ActionEntry>,
    pub tools: Vec<ToolResult>,
    /// Memory carried into the trial, already rendered.
    pub prior: Vec<String>,
    pub memory: Vec<Observation>,
    pub frame: PerceptionFrame,
}

/// Builds the context from a transcript prefix and the current frame.
pub fn build_context(system: &str, prefix: &[Event], frame: &PerceptionFrame, prior: &[String]) -> PromptContext {
    let mut ctx = PromptContext {
        system: system.to_string(),
        dialogue: Vec::new(),
        actions: Vec::new(),
        tools: Vec::new(),
        prior: prior.to_vec(),
        memory: Vec::new(),
        frame: frame.clone(),
    };
    let frames = prefix.iter().filter_map(|e| match &e.payload {
        Payload::Perception { frame } => Some(frame),
        _ => None,
    });
    for f in frames.chain(std::iter::once(frame)) {
        observe(&mut ctx.memory, f);
    }
    for e in prefix {
        match &e.payload {
            Payload::Utterance { speaker, text, .. } => ctx.dialogue.push((*speaker, text.clone())),
            Payload::Command { id, command } => ctx.actions.push(ActionEntry::Command {
                id: *id,
                command: command.clone(),
                outcome: None,
            }),
            Payload::Outcome { id, status, detail } => {
                for a in ctx.actions.iter_mut().rev() {
                    if let ActionEntry::Command { id: aid, outcome, .. } = a {
                        if aid == id {
                            *outcome = Some((*status, detail.clone()));
                            break;
                        }
                    }
                }
            }
            Payload::SchemaError { tool, error } => ctx.actions.push(ActionEntry::Invalid {
                tool: tool.clone(),
                error: error.clone(),
            }),
            Payload::Tool {
                name,
                arguments,
                result,
            } => ctx.tools.push(ToolResult {
                name: name.clone(),
                arguments: arguments.clone(),
                result: result.clone(),
            }),
            _ => {}
        }
    }
    ctx
}

fn observe(memory: &mut Vec<Observation>, frame: &PerceptionFrame) {
    for d in &frame.detections {
        match memory.iter_mut().find(|o| o.object_id == d.object_id) {
            Some(o) => {
                if d.label.is_some() {
                    o.label = d.label.clone();
                }
            }
            None => memory.push(Observation {
                object_id: d.object_id.clone(),
                category: d.category.clone(),
                shape_class: d.shape_class.clone(),
                label: d.label.clone(),
                first_seen: frame.tick,
            }),
        }
    }
}

impl PromptContext {
    /// The per-cycle user message.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "DIALOGUE");
        if self.dialogue.is_empty() {
            let _ = writeln!(s, "(none)");
        }
        for (speaker, text) in &self.dialogue {
            let who = match speaker {
                Speaker::Human => "Daniel",
                Speaker::Agent => "You",
            };
            let _ = writeln!(s, "{who}: {text}");
        }
        let _ = writeln!(s, "ACTIONS");
        if self.actions.is_empty() {
            let _ = writeln!(s, "(none)");
        }
        for a in &self.actions {
            match a {
                ActionEntry::Command { id, command, outcome } => {
                    let o = match outcome {
                        None => "running".to_string(),
                        Some((status, None)) => status_word(*status).to_string(),
                        Some((status, Some(d))) => format!("{}: {d}", status_word(*status)),
                    };
                    let _ = writeln!(s, "#{id} {command} -> {o}");
                }
                ActionEntry::Invalid { tool, error } => {
                    let _ = writeln!(s, "invalid {tool} call -> {error}");
                }
            }
        }
        let _ = writeln!(s, "TOOL RESULTS");
        if self.tools.is_empty() {
            let _ = writeln!(s, "(none)");
        }
        for t in &self.tools {
            let result = match &t.result {
                Value::String(text) => text.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(s, "{}({}) -> {}", t.name, t.arguments, result);
        }
        let _ = writeln!(s, "MEMORY");
        if self.prior.is_empty() && self.memory.is_empty() {
            let _ = writeln!(s, "(none)");
        }
        for p in &self.prior {
            let _ = writeln!(s, "{p}");
        }
        for o in &self.memory {
            let label = o.label.as_deref().map(|l| format!(", label {l}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "t={} {} ({}, {}{label})",
                o.first_seen, o.object_id, o.category, o.shape_class
            );
        }
        let _ = writeln!(s, "PERCEPTION");
        let _ = writeln!(s, "{}", self.frame.render());
        s
    }

    pub fn human_lines(&self) -> impl Iterator<Item = &str> {
        self.dialogue
            .iter()
            .filter(|(s, _)| *s == Speaker::Human)
            .map(|(_, t)| t.as_str())
    }

    pub fn commands(&self) -> impl Iterator<Item = (&Command, Option<&(OutcomeStatus, Option<String>)>)> {
        self.actions.iter().filter_map(|a| match a {
            ActionEntry::Command { command, outcome, .. } => Some((command, outcome.as_ref())),
            ActionEntry::Invalid { .. } => None,
        })
    }
}

fn status_word(s: OutcomeStatus) -> &'static str {
    match s {
        OutcomeStatus::Succeeded => "succeeded",
        OutcomeStatus::Failed => "failed",
        OutcomeStatus::Preempted => "preempted",
        OutcomeStatus::Rejected => "rejected",
    }
}
