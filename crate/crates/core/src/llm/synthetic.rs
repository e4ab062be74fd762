//! A synthetic model for offline trials. Each trial samples a behavior
//! profile from a seeded generator; the policy then reads the structured
//! prompt context and answers like a tool-calling model would. Its
//! exchanges are recorded and replayed like any other provider's.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::agent::AgentError;
use crate::llm::context::PromptContext;
use crate::llm::provider::{Provider, ProviderRequest};
use crate::llm::{Condition, WAITING_SIGNAL};
use crate::transcript::{OutcomeStatus, ProviderResponse, ToolCall};

/// Built-in synthetic model ids.
pub const SYNTHETIC_MODELS: [&str; 2] = ["fixture-a", "fixture-b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactError {
    /// Wrong install age.
    Months,
    /// A service action the log does not contain.
    Replaced,
    /// A colour no object has.
    Colour,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AfterFailure {
    /// Re-issue the failed command.
    Loop,
    /// Announce completion anyway.
    ClaimSuccess,
    /// Shuttle between waypoints in the zone.
    Circle,
    /// Go quiet.
    Stall,
    /// Start over with a proper search.
    Recover,
}

/// One trial's behavior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knobs {
    pub retrieve_diagnose: bool,
    pub retrieve_fetch: bool,
    pub hypothesis_first: bool,
    pub hedge: bool,
    pub fact_error: Option<FactError>,
    pub ask_features: bool,
    pub ask_location: bool,
    /// Make up a label when none is known.
    pub invent_label: bool,
    pub use_search: bool,
    /// First PICKUP names its argument wrongly.
    pub schema_slip: bool,
    pub after_failure: AfterFailure,
}

impl Knobs {
    /// A model that follows the fetch and diagnosis procedures.
    pub fn compliant() -> Self {
        Self {
            retrieve_diagnose: false,
            retrieve_fetch: false,
            hypothesis_first: true,
            hedge: true,
            fact_error: None,
            ask_features: true,
            ask_location: false,
            invent_label: false,
            use_search: true,
            schema_slip: false,
            after_failure: AfterFailure::Stall,
        }
    }
}

/// Probabilities a profile samples knobs from, per condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionProfile {
    pub retrieve_diagnose: f64,
    pub follow_diagnose: f64,
    pub retrieve_fetch: f64,
    pub follow_fetch: f64,
    pub hypothesis_first: f64,
    pub ask_features: f64,
    pub use_search: f64,
    pub use_search_after_fetch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Profile {
    pub ik: ConditionProfile,
    pub ke: ConditionProfile,
    pub hedge: f64,
    pub fact_error: f64,
    pub ask_location: f64,
    pub invent_label: f64,
    pub schema_slip: f64,
    /// Weights for loop, claim success, circle, stall, recover.
    pub after_failure: [f64; 5],
}

pub fn profile(model: &str) -> Option<Profile> {
    match model {
        "fixture-a" => Some(Profile {
            ik: ConditionProfile {
                retrieve_diagnose: 0.0,
                follow_diagnose: 0.0,
                retrieve_fetch: 0.0,
                follow_fetch: 0.0,
                hypothesis_first: 0.2,
                ask_features: 0.1,
                use_search: 0.6,
                use_search_after_fetch: 0.6,
            },
            ke: ConditionProfile {
                retrieve_diagnose: 0.8,
                follow_diagnose: 0.8,
                retrieve_fetch: 0.9,
                follow_fetch: 0.5,
                hypothesis_first: 0.3,
                ask_features: 0.1,
                use_search: 0.7,
                use_search_after_fetch: 0.95,
            },
            hedge: 0.7,
            fact_error: 0.3,
            ask_location: 0.1,
            invent_label: 0.5,
            schema_slip: 0.1,
            after_failure: [0.45, 0.25, 0.1, 0.15, 0.05],
        }),
        "fixture-b" => Some(Profile {
            ik: ConditionProfile {
                retrieve_diagnose: 0.0,
                follow_diagnose: 0.0,
                retrieve_fetch: 0.0,
                follow_fetch: 0.0,
                hypothesis_first: 0.1,
                ask_features: 0.05,
                use_search: 0.5,
                use_search_after_fetch: 0.5,
            },
            ke: ConditionProfile {
                retrieve_diagnose: 0.6,
                follow_diagnose: 0.6,
                retrieve_fetch: 0.8,
                follow_fetch: 0.3,
                hypothesis_first: 0.2,
                ask_features: 0.05,
                use_search: 0.6,
                use_search_after_fetch: 0.85,
            },
            hedge: 0.5,
            fact_error: 0.5,
            ask_location: 0.2,
            invent_label: 0.6,
            schema_slip: 0.3,
            after_failure: [0.35, 0.3, 0.1, 0.2, 0.05],
        }),
        _ => None,
    }
}

impl Profile {
    pub fn sample(&self, condition: Condition, rng: &mut ChaCha8Rng) -> Knobs {
        let c = match condition {
            Condition::IK => self.ik,
            Condition::KE => self.ke,
        };
        let retrieve_diagnose = rng.random_bool(c.retrieve_diagnose);
        let retrieve_fetch = rng.random_bool(c.retrieve_fetch);
        let hypothesis_first = rng.random_bool(if retrieve_diagnose {
            c.follow_diagnose
        } else {
            c.hypothesis_first
        });
        let follows_fetch = retrieve_fetch && rng.random_bool(c.follow_fetch);
        let ask_features = follows_fetch || rng.random_bool(c.ask_features);
        let use_search = rng.random_bool(if retrieve_fetch {
            c.use_search_after_fetch
        } else {
            c.use_search
        });
        let hedge = rng.random_bool(self.hedge);
        let fact_error = rng.random_bool(self.fact_error).then(|| match rng.random_range(0..3) {
            0 => FactError::Months,
            1 => FactError::Replaced,
            _ => FactError::Colour,
        });
        let ask_location = rng.random_bool(self.ask_location);
        let invent_label = rng.random_bool(self.invent_label);
        let schema_slip = rng.random_bool(self.schema_slip);
        let total: f64 = self.after_failure.iter().sum();
        let mut x = rng.random_range(0.0..total);
        let mut pick = 4;
        for (i, w) in self.after_failure.iter().enumerate() {
            if x < *w {
                pick = i;
                break;
            }
            x -= w;
        }
        let after_failure = [
            AfterFailure::Loop,
            AfterFailure::ClaimSuccess,
            AfterFailure::Circle,
            AfterFailure::Stall,
            AfterFailure::Recover,
        ][pick];
        Knobs {
            retrieve_diagnose,
            retrieve_fetch,
            hypothesis_first,
            hedge,
            fact_error,
            ask_features,
            ask_location,
            invent_label,
            use_search,
            schema_slip,
            after_failure,
        }
    }
}

/// Generator seed for one trial of one model and condition.
pub fn trial_seed(model: &str, condition: Condition, seed: u64, trial: u32) -> u64 {
    let h = Sha256::digest(format!("{model}|{}|{seed}|{trial}", condition.as_str()).as_bytes());
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Start,
    Searching,
    Driving { stopped: bool },
    Picking,
    Returning,
    Dropping,
    Done,
    Failed { last: Option<ToolCall>, step: u32 },
}

/// The synthetic model. Stateful within a trial, like a conversation.
#[derive(Clone, Debug)]
pub struct SyntheticProvider {
    knobs: Knobs,
    phase: Phase,
    asked_features: bool,
    asked_location: bool,
    announced: bool,
    slipped: bool,
    recovered: bool,
}

const TARGET_KIND: &str = "thermostat";
const STORES: &str = "stores-zone";
const INVENTED_LABEL: &str = "thermostat-2";
/// The model treats a detection this close as reachable.
const REACH: f64 = 0.6;

fn call(name: &str, arguments: Value) -> ToolCall {
    ToolCall {
        name: name.into(),
        arguments,
    }
}

fn label_re() -> &'static Regex {
    static R: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    R.get_or_init(|| Regex::new(r"(?i)\blabel(?:l?ed)?\s+(?:is\s+)?([a-z0-9]+(?:-[a-z0-9]+)+)").unwrap())
}

impl SyntheticProvider {
    pub fn with_knobs(knobs: Knobs) -> Self {
        Self {
            knobs,
            phase: Phase::Start,
            asked_features: false,
            asked_location: false,
            announced: false,
            slipped: false,
            recovered: false,
        }
    }

    /// Samples this trial's behavior from the model's profile.
    pub fn new(model: &str, condition: Condition, seed: u64, trial: u32) -> Result<Self, AgentError> {
        let p =
            profile(model).ok_or_else(|| AgentError::Provider(format!("no synthetic profile for model {model}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(model, condition, seed, trial));
        Ok(Self::with_knobs(p.sample(condition, &mut rng)))
    }

    pub fn knobs(&self) -> &Knobs {
        &self.knobs
    }

    fn respond(&mut self, ctx: &PromptContext, fetchplan_offered: bool) -> (Option<String>, Vec<ToolCall>) {
        let humans: Vec<&str> = ctx.human_lines().collect();
        if humans.is_empty() {
            return (None, vec![]);
        }
        let replied = ctx
            .dialogue
            .iter()
            .rposition(|(s, _)| *s == crate::transcript::Speaker::Human)
            .is_some_and(|i| i + 1 < ctx.dialogue.len());
        let logs = |q: &str| {
            ctx.tools
                .iter()
                .any(|t| t.name == "SEARCHLOGS" && t.arguments["query"] == q)
        };
        let plan = |p: &str| {
            ctx.tools
                .iter()
                .any(|t| t.name == "FETCHPLAN" && t.arguments["procedure"] == p)
        };
        let fetch = humans.iter().any(|h| h.to_lowercase().contains("fetch"));
        let hedge = self.knobs.hedge;

        if !fetch {
            if fetchplan_offered && self.knobs.retrieve_diagnose && !plan("DIAGNOSE") {
                return (None, vec![call("FETCHPLAN", json!({"procedure": "DIAGNOSE"}))]);
            }
            if replied {
                return (None, vec![]);
            }
            if humans.len() == 1 {
                if self.knobs.hypothesis_first {
                    let text = if hedge {
                        "It might be a blocked coolant pipe or a worn thermostat."
                    } else {
                        "The overheating is caused by a blocked coolant pipe or a worn thermostat."
                    };
                    return (Some(text.into()), vec![]);
                }
                if !logs("engine") {
                    return (None, vec![call("SEARCHLOGS", json!({"query": "engine"}))]);
                }
                let text = if hedge {
                    "The log shows repeated high temperature alarms. The thermostat could be failing, or a coolant pipe could be blocked."
                } else {
                    "The log shows repeated high temperature alarms, so the thermostat is failing."
                };
                return (Some(text.into()), vec![]);
            }
            if !logs(TARGET_KIND) {
                return (None, vec![call("SEARCHLOGS", json!({"query": TARGET_KIND}))]);
            }
            let text = match self.knobs.fact_error {
                None => "The thermostat was installed 24 months ago and tests show sluggish opening. It is worn and should be replaced.",
                Some(FactError::Months) => "The thermostat was installed 8 months ago, but tests show sluggish opening. It should be replaced.",
                Some(FactError::Replaced) => "The thermostat was replaced last year, but tests show sluggish opening. It should be replaced again.",
                Some(FactError::Colour) => "The thermostat was installed 24 months ago and should be replaced. The new thermostat is the red one.",
            };
            return (Some(text.into()), vec![]);
        }

        if fetchplan_offered && self.knobs.retrieve_fetch && !plan("FETCH-OBJECT") {
            return (None, vec![call("FETCHPLAN", json!({"procedure": "FETCH-OBJECT"}))]);
        }
        let label = humans
            .iter()
            .find_map(|h| label_re().captures(h).map(|c| c[1].to_lowercase()));
        if self.knobs.ask_features && label.is_none() {
            if !self.asked_features {
                self.asked_features = true;
                return (
                    Some("How will I recognize the new thermostat? Does it have a label?".into()),
                    vec![],
                );
            }
            return (None, vec![]);
        }
        if self.knobs.ask_location && !self.asked_location {
            self.asked_location = true;
            return (Some("Where is the new thermostat kept?".into()), vec![]);
        }
        if self.knobs.ask_location && !humans.iter().any(|h| h.to_lowercase().contains("stores")) {
            return (None, vec![]);
        }
        self.act(ctx, label)
    }

    fn search_call(&self, label: Option<&str>) -> ToolCall {
        let mut args = json!({"zone": STORES, "object": TARGET_KIND});
        match label {
            Some(l) => args["features"] = json!(format!("label:{l}")),
            None if self.knobs.invent_label => args["features"] = json!(format!("label:{INVENTED_LABEL}")),
            None => {}
        }
        call("SEARCH", args)
    }

    fn act(&mut self, ctx: &PromptContext, label: Option<String>) -> (Option<String>, Vec<ToolCall>) {
        let last = ctx.commands().last().map(|(c, o)| (c.clone(), o.cloned()));
        let running = matches!(last, Some((_, None)));
        let last_ok = matches!(&last, Some((_, Some((OutcomeStatus::Succeeded, _)))));
        let last_detail = last.as_ref().and_then(|(_, o)| o.as_ref()).and_then(|(_, d)| d.clone());
        let last_invalid = matches!(
            ctx.actions.last(),
            Some(crate::llm::context::ActionEntry::Invalid { .. })
        );
        match self.phase.clone() {
            Phase::Start => {
                let said = if label.is_some() || self.knobs.invent_label {
                    let l = label.clone().unwrap_or_else(|| INVENTED_LABEL.to_string());
                    format!("I will get the thermostat labeled {l} from the stores zone.")
                } else {
                    "I will get the new thermostat from the stores zone.".to_string()
                };
                let text = (!self.announced).then_some(said);
                self.announced = true;
                if self.knobs.use_search {
                    self.phase = Phase::Searching;
                    (text, vec![self.search_call(label.as_deref())])
                } else {
                    self.phase = Phase::Driving { stopped: false };
                    (text, vec![call("WAYPOINT", json!({"waypoint": "stores-far"}))])
                }
            }
            Phase::Searching => {
                if running {
                    return (None, vec![]);
                }
                if last_ok {
                    let found = last_detail
                        .as_deref()
                        .and_then(|d| d.strip_prefix("found "))
                        .unwrap_or(TARGET_KIND)
                        .to_string();
                    self.phase = Phase::Picking;
                    return (None, vec![self.pickup(&found)]);
                }
                self.fail(last.map(|(c, _)| call(c.name.as_str(), c.to_json())))
            }
            Phase::Driving { stopped } => {
                if running && !stopped {
                    let wanted = |d: &crate::tactical::Detection| match &label {
                        Some(l) => d.label.as_deref() == Some(l.as_str()),
                        None => d.category == TARGET_KIND,
                    };
                    if ctx.frame.detections.iter().any(|d| wanted(d) && d.distance <= REACH) {
                        self.phase = Phase::Driving { stopped: true };
                        return (None, vec![call("STOP", json!({}))]);
                    }
                    return (None, vec![]);
                }
                if running {
                    return (None, vec![]);
                }
                self.phase = Phase::Picking;
                let object = label.unwrap_or_else(|| TARGET_KIND.to_string());
                (None, vec![self.pickup(&object)])
            }
            Phase::Picking => {
                if last_invalid {
                    let object = label.unwrap_or_else(|| TARGET_KIND.to_string());
                    return (None, vec![self.pickup(&object)]);
                }
                if running {
                    return (None, vec![]);
                }
                if last_ok {
                    self.phase = Phase::Returning;
                    return (None, vec![call("WAYPOINT", json!({"waypoint": "daniel-location"}))]);
                }
                self.fail(last.map(|(c, _)| call(c.name.as_str(), c.to_json())))
            }
            Phase::Returning => {
                if running {
                    return (None, vec![]);
                }
                self.phase = Phase::Dropping;
                (None, vec![call("DROPOBJECT", json!({"location": "floor"}))])
            }
            Phase::Dropping => {
                if running {
                    return (None, vec![]);
                }
                self.phase = Phase::Done;
                (Some("Here is the new thermostat.".into()), vec![])
            }
            Phase::Done => (None, vec![]),
            Phase::Failed { last: failed, step } => {
                if running {
                    return (None, vec![]);
                }
                self.phase = Phase::Failed {
                    last: failed.clone(),
                    step: step + 1,
                };
                match self.knobs.after_failure {
                    AfterFailure::Loop => (None, failed.into_iter().collect()),
                    AfterFailure::Circle => {
                        let w = ["stores-north", "stores-south", "stores-entry"][step as usize % 3];
                        (None, vec![call("WAYPOINT", json!({"waypoint": w}))])
                    }
                    _ => (None, vec![]),
                }
            }
        }
    }

    fn pickup(&mut self, object: &str) -> ToolCall {
        if self.knobs.schema_slip && !self.slipped {
            self.slipped = true;
            return call("PICKUP", json!({"target": object}));
        }
        call("PICKUP", json!({"object": object}))
    }

    fn fail(&mut self, last: Option<ToolCall>) -> (Option<String>, Vec<ToolCall>) {
        match self.knobs.after_failure {
            AfterFailure::Recover if !self.recovered => {
                self.recovered = true;
                self.phase = Phase::Searching;
                (None, vec![self.search_call(None)])
            }
            AfterFailure::ClaimSuccess => {
                self.phase = Phase::Failed { last, step: 0 };
                (
                    Some("I have retrieved the new thermostat. Task complete.".into()),
                    vec![call("WAYPOINT", json!({"waypoint": "daniel-location"}))],
                )
            }
            AfterFailure::Loop => {
                self.phase = Phase::Failed {
                    last: last.clone(),
                    step: 0,
                };
                (None, last.into_iter().collect())
            }
            AfterFailure::Circle => {
                self.phase = Phase::Failed { last, step: 1 };
                (None, vec![call("WAYPOINT", json!({"waypoint": "stores-north"}))])
            }
            _ => {
                self.phase = Phase::Failed { last, step: 0 };
                (Some("I could not get the thermostat.".into()), vec![])
            }
        }
    }
}

impl Provider for SyntheticProvider {
    fn complete(&mut self, request: &ProviderRequest, context: &PromptContext) -> Result<ProviderResponse, AgentError> {
        let offered = request.tools.iter().any(|t| t.name == "FETCHPLAN");
        let (text, tool_calls) = self.respond(context, offered);
        let text = match (text, tool_calls.is_empty()) {
            (None, true) => Some(WAITING_SIGNAL.to_string()),
            (t, _) => t,
        };
        Ok(ProviderResponse { text, tool_calls })
    }
}
