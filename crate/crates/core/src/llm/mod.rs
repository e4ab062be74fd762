//! A strategic layer backed by a language model. Each cycle the agent
//! rebuilds its prompt from the events it has seen, makes one provider call
//! and turns the reply into utterances, commands and tool results.

pub mod context;
pub mod provider;
pub mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{AgentError, AgentIdentity, AgentInput, AgentOutput, StrategicAgent};
use crate::command::{Command, CommandName, ParamKind, ALL_COMMANDS};
use crate::kb::KnowledgeBase;
use crate::sim::ScenarioFixture;
use crate::tactical::Grounding;
use crate::transcript::{Event, Payload, ProviderResponse, Speaker, TrialTranscript};

use context::{build_context, PromptContext};
use provider::{Message, Provider, ProviderRequest, ReplayProvider, ToolSchema};

/// Exact reply meaning nothing to do this cycle.
pub const WAITING_SIGNAL: &str = ":::WAITING:::";

const SYSTEM_TEMPLATE: &str = include_str!("../../fixtures/prompts/system.txt");
const FETCHPLAN_BLOCK: &str = include_str!("../../fixtures/prompts/fetchplan.txt");
const FETCH_OBJECT_NARRATIVE: &str = include_str!("../../fixtures/prompts/fetch-object.txt");
const DIAGNOSE_NARRATIVE: &str = include_str!("../../fixtures/prompts/diagnose.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Internal knowledge only.
    IK,
    /// Knowledge-equalized: procedures retrievable through FETCHPLAN.
    KE,
}

impl Condition {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_lowercase().as_str() {
            "ik" => Some(Condition::IK),
            "ke" => Some(Condition::KE),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::IK => "ik",
            Condition::KE => "ke",
        }
    }
}

pub fn build_system_prompt(condition: Condition) -> String {
    let block = match condition {
        Condition::IK => "",
        Condition::KE => FETCHPLAN_BLOCK,
    };
    SYSTEM_TEMPLATE.replacen("{{FETCHPLAN}}\n", block, 1)
}

/// The FETCHPLAN block that KE adds to the shared prompt.
pub fn fetchplan_block() -> &'static str {
    FETCHPLAN_BLOCK
}

/// Narrative text of a procedure, if it exists.
pub fn narrative(procedure: &str) -> Option<&'static str> {
    match procedure.to_uppercase().as_str() {
        "FETCH-OBJECT" => Some(FETCH_OBJECT_NARRATIVE),
        "DIAGNOSE" => Some(DIAGNOSE_NARRATIVE),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("tool not available: {0}")]
    NotAvailable(String),
    #[error("unknown procedure {0}")]
    UnknownProcedure(String),
    #[error("missing argument {0}")]
    MissingArgument(&'static str),
}

/// FETCHPLAN: the narrative for a procedure, available under KE only.
pub fn fetchplan(condition: Condition, procedure: &str) -> Result<&'static str, ToolError> {
    if condition != Condition::KE {
        return Err(ToolError::NotAvailable("FETCHPLAN".into()));
    }
    narrative(procedure).ok_or_else(|| ToolError::UnknownProcedure(procedure.to_string()))
}

fn command_description(c: CommandName) -> &'static str {
    match c {
        CommandName::Search => "Sweep a zone for an object type; halts in front of the first object whose features match. Stops on detection by itself.",
        CommandName::Waypoint => "Drive to a named waypoint. Does not react to perception and does not stop for objects on the way.",
        CommandName::Pickup => "Grasp an object within 0.5 m, by id, label or type.",
        CommandName::Dropobject => "Put the held object down at a location (floor).",
        CommandName::Gripper => "Open or close the gripper.",
        CommandName::Stop => "Halt the running action.",
        CommandName::Randomwalk => "Wander for a number of cycles.",
    }
}

fn string_schema(description: &str) -> Value {
    json!({"type": "string", "description": description})
}

/// Tool schemas offered to the model: the seven actions, SEARCHLOGS and,
/// under KE, FETCHPLAN.
pub fn tool_schemas(condition: Condition) -> Vec<ToolSchema> {
    let mut out: Vec<ToolSchema> = ALL_COMMANDS
        .iter()
        .map(|c| {
            let mut props = serde_json::Map::new();
            let mut required = Vec::new();
            for p in c.schema() {
                let desc = match p.kind {
                    ParamKind::Ident => "identifier",
                    ParamKind::Features => "comma-separated key:value pairs, e.g. label:abc",
                    ParamKind::GripperState => "open or close",
                    ParamKind::Count => "positive integer",
                };
                props.insert(p.name.to_string(), string_schema(desc));
                if p.required {
                    required.push(Value::String(p.name.to_string()));
                }
            }
            ToolSchema {
                name: c.as_str().to_string(),
                description: command_description(*c).to_string(),
                parameters: json!({"type": "object", "properties": props, "required": required}),
            }
        })
        .collect();
    out.push(ToolSchema {
        name: "SEARCHLOGS".into(),
        description: "Search the engine service log.".into(),
        parameters: json!({"type": "object", "properties": {"query": string_schema("search text")}, "required": ["query"]}),
    });
    if condition == Condition::KE {
        out.push(ToolSchema {
            name: "FETCHPLAN".into(),
            description: "Retrieve the written procedure for a task: FETCH-OBJECT or DIAGNOSE.".into(),
            parameters: json!({"type": "object", "properties": {"procedure": string_schema("procedure name")}, "required": ["procedure"]}),
        });
    }
    out
}

/// One parsed element of a model reply.
#[derive(Clone, Debug, PartialEq)]
pub enum Parsed {
    Say(String),
    Command(Command),
    Tool {
        name: String,
        arguments: Value,
        result: Value,
    },
    /// Fed back to the model as the outcome of its call.
    SchemaError {
        tool: String,
        error: String,
    },
    Waiting,
}

/// Interprets a reply. Tool calls are validated; invalid ones become
/// schema errors rather than failures.
pub fn parse_output(response: &ProviderResponse, condition: Condition, kb: &KnowledgeBase) -> Vec<Parsed> {
    let mut out = Vec::new();
    if let Some(text) = response.text.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
        if text == WAITING_SIGNAL {
            out.push(Parsed::Waiting);
        } else {
            out.push(Parsed::Say(text.to_string()));
        }
    }
    for call in &response.tool_calls {
        let name = call.name.to_uppercase();
        let arg = |k: &'static str| call.arguments.get(k).and_then(Value::as_str).map(str::to_string);
        let schema_error = |e: String| Parsed::SchemaError {
            tool: name.clone(),
            error: e,
        };
        let parsed = match name.as_str() {
            "SEARCHLOGS" => match arg("query") {
                Some(q) => Parsed::Tool {
                    name: name.clone(),
                    arguments: call.arguments.clone(),
                    result: serde_json::to_value(kb.search_logs(&q)).expect("log entries serialize"),
                },
                None => schema_error(ToolError::MissingArgument("query").to_string()),
            },
            "FETCHPLAN" => match arg("procedure") {
                Some(p) => match fetchplan(condition, &p) {
                    Ok(text) => Parsed::Tool {
                        name: name.clone(),
                        arguments: call.arguments.clone(),
                        result: Value::String(text.to_string()),
                    },
                    Err(e) => schema_error(e.to_string()),
                },
                None if condition == Condition::IK => schema_error(ToolError::NotAvailable(name.clone()).to_string()),
                None => schema_error(ToolError::MissingArgument("procedure").to_string()),
            },
            _ => match Command::from_tool_call(&name, &call.arguments) {
                Ok(c) => Parsed::Command(c),
                Err(e) => schema_error(e.to_string()),
            },
        };
        out.push(parsed);
    }
    if out.is_empty() {
        out.push(Parsed::Waiting);
    }
    out
}

/// Memory the scenario starts with, rendered for the prompt.
pub fn prior_memory(fixture: &ScenarioFixture) -> Vec<String> {
    fixture
        .episodic
        .iter()
        .map(|(t, f)| {
            let slots: Vec<String> = f
                .slots
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{k} {}",
                        crate::frames::notation::render_filler(v)
                            .trim_start_matches('@')
                            .to_lowercase()
                    )
                })
                .collect();
            format!(
                "t={t} {} {} (prior record)",
                f.concept().to_lowercase(),
                slots.join(", ")
            )
        })
        .collect()
}

/// Default strategic latency in ticks.
pub const DEFAULT_LATENCY: u64 = 1;

pub struct LlmAgent {
    model: String,
    condition: Condition,
    latency: u64,
    provider: Box<dyn Provider>,
    kb: Arc<KnowledgeBase>,
    system: String,
    prior: Vec<String>,
    /// The events this agent has seen, in transcript order.
    seen: Vec<Event>,
    /// Own outputs not yet released into the world.
    unreleased: Vec<Event>,
    exchanges: u32,
    commands: u32,
    idle: bool,
}

impl LlmAgent {
    pub fn new(
        model: &str,
        condition: Condition,
        provider: Box<dyn Provider>,
        kb: Arc<KnowledgeBase>,
        fixture: &ScenarioFixture,
    ) -> Self {
        Self {
            model: model.to_string(),
            condition,
            latency: DEFAULT_LATENCY,
            provider,
            kb,
            system: build_system_prompt(condition),
            prior: prior_memory(fixture),
            seen: Vec::new(),
            unreleased: Vec::new(),
            exchanges: 0,
            commands: 0,
            idle: false,
        }
    }

    /// An agent that answers from a recorded trial, configured from its
    /// header.
    pub fn replaying(
        recording: &TrialTranscript,
        kb: Arc<KnowledgeBase>,
        fixture: &ScenarioFixture,
    ) -> Result<Self, AgentError> {
        let h = &recording.header;
        let bad = |what: &str| AgentError::Provider(format!("recording header: {what}"));
        if h.agent != "llm" {
            return Err(bad(&format!("agent is {}, not llm", h.agent)));
        }
        let model = h.model.as_deref().ok_or_else(|| bad("no model id"))?;
        let condition = h
            .condition
            .as_deref()
            .and_then(Condition::parse)
            .ok_or_else(|| bad("no valid condition"))?;
        let provider = ReplayProvider::from_transcript(recording);
        Ok(Self::new(model, condition, Box::new(provider), kb, fixture).with_latency(h.latency))
    }

    pub fn with_latency(mut self, ticks: u64) -> Self {
        self.latency = ticks;
        self
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Events the agent has seen so far.
    pub fn seen(&self) -> &[Event] {
        &self.seen
    }

    pub fn request_for(&self, ctx: &PromptContext) -> ProviderRequest {
        ProviderRequest {
            model: self.model.clone(),
            temperature: 0.0,
            messages: vec![
                Message {
                    role: "system".into(),
                    content: ctx.system.clone(),
                },
                Message {
                    role: "user".into(),
                    content: ctx.render(),
                },
            ],
            tools: tool_schemas(self.condition),
        }
    }
}

impl StrategicAgent for LlmAgent {
    fn identity(&self) -> AgentIdentity {
        AgentIdentity {
            agent: "llm".into(),
            model: Some(self.model.clone()),
            condition: Some(self.condition.as_str().into()),
        }
    }

    fn latency(&self) -> u64 {
        self.latency
    }

    fn grounding(&self) -> Grounding {
        Grounding::Local
    }

    fn step(&mut self, input: &AgentInput) -> Result<Vec<AgentOutput>, AgentError> {
        let t = input.tick;
        for u in &input.utterances {
            self.seen.push(Event::new(
                t,
                Payload::Utterance {
                    speaker: Speaker::Human,
                    text: u.clone(),
                    turn: None,
                },
            ));
        }
        self.seen.append(&mut self.unreleased);
        for o in &input.outcomes {
            self.seen.push(Event::new(
                t,
                Payload::Outcome {
                    id: o.id,
                    status: o.status,
                    detail: o.detail.clone(),
                },
            ));
        }
        let ctx = build_context(&self.system, &self.seen, &input.frame, &self.prior);
        self.seen.push(Event::new(
            t,
            Payload::Perception {
                frame: input.frame.clone(),
            },
        ));
        let request = self.request_for(&ctx);
        let response = self.provider.complete(&request, &ctx)?;
        let release = t + self.latency;
        let mut out = vec![AgentOutput::Log(Payload::Exchange {
            index: self.exchanges,
            model: self.model.clone(),
            request_digest: request.digest(),
            response: response.clone(),
        })];
        self.exchanges += 1;
        self.idle = false;
        for p in parse_output(&response, self.condition, &self.kb) {
            let (output, event) = match p {
                Parsed::Say(text) => (
                    AgentOutput::Say(text.clone()),
                    Some(Payload::Utterance {
                        speaker: Speaker::Agent,
                        text,
                        turn: None,
                    }),
                ),
                Parsed::Command(command) => {
                    let id = self.commands;
                    self.commands += 1;
                    (
                        AgentOutput::Command(command.clone()),
                        Some(Payload::Command { id, command }),
                    )
                }
                Parsed::Tool {
                    name,
                    arguments,
                    result,
                } => {
                    let payload = Payload::Tool {
                        name,
                        arguments,
                        result,
                    };
                    (AgentOutput::Log(payload.clone()), Some(payload))
                }
                Parsed::SchemaError { tool, error } => {
                    let payload = Payload::SchemaError { tool, error };
                    (AgentOutput::Log(payload.clone()), Some(payload))
                }
                Parsed::Waiting => {
                    self.idle = true;
                    (AgentOutput::Log(Payload::Waiting), None)
                }
            };
            if let Some(e) = event {
                self.unreleased.push(Event::new(release, e));
            }
            out.push(output);
        }
        if self.latency == 0 {
            self.seen.append(&mut self.unreleased);
        }
        Ok(out)
    }

    fn is_idle(&self) -> bool {
        self.idle && self.unreleased.is_empty()
    }
}
