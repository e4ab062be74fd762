//! The reference strategic layer.
//!
//! Utterances are mapped to TMRs and integrated into a situation model;
//! speech acts post goals; goals instantiate scripts as plans on a serial
//! agenda. A plan runs only after its knowledge requirements are bound, and
//! unresolvable requirements trigger metascripts that ask the teammate.
//! Every output is preceded by a reasoning record naming the script, cause
//! link or requirement behind it.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;
use thiserror::Error;

use crate::agent::{ActionReport, AgentIdentity, AgentInput, AgentOutput, CandidateReport, StrategicAgent};
use crate::command::{parse_features, render_features, Command, CommandName, Features};
use crate::frames::templates::{build_alternative, gmr_to_utterance, utterance_to_tmr, ReferenceResolver};
use crate::frames::{
    parse_frames, render_filler, Filler, FrameDocument, FrameId, FrameInstance, Provenance, ProvenanceKind,
};
use crate::kb::{
    months_between, Arg, EpisodicStore, FramePattern, KnowledgeBase, KnowledgeRequirement, Script, Source, Step,
    StepKind,
};
use crate::sim::ScenarioFixture;
use crate::tactical::Grounding;
use crate::transcript::{OutcomeStatus, Payload};

/// Components estimated below this condition are recommended for
/// replacement.
pub const WORN_THRESHOLD: f64 = 0.7;

// -- situation model ------------------------------------------------------

/// Live store of task-relevant entities. Frames are only ever added or
/// slot-refined.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SituationModel {
    pub frames: FrameDocument,
    index: BTreeMap<String, Vec<FrameId>>,
    pub focus: Option<FrameId>,
    pub updated: u64,
}

impl SituationModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a frame under a fresh situation id.
    pub fn add(&mut self, concept: &str, slots: Vec<(String, Filler)>, tick: u64) -> FrameId {
        let id = FrameId::new(concept, self.frames.next_index(concept));
        let mut f = FrameInstance::new(id.clone());
        f.slots = slots;
        f.provenance = Some(Provenance {
            kind: ProvenanceKind::Situation,
            tick,
        });
        self.frames.push(f);
        self.index.entry(concept.to_string()).or_default().push(id.clone());
        self.updated = tick;
        id
    }

    pub fn refine(&mut self, id: &FrameId, slot: &str, filler: Filler, tick: u64) -> bool {
        let Some(f) = self.frames.get_mut(id) else { return false };
        if f.get(slot) == Some(&filler) {
            return false;
        }
        f.set(slot, filler);
        self.updated = tick;
        true
    }

    pub fn get(&self, id: &FrameId) -> Option<&FrameInstance> {
        self.frames.get(id)
    }

    /// Concept named by a filler: the concept itself or the instance's.
    pub fn concept_of(&self, filler: &Filler) -> Option<String> {
        match filler {
            Filler::Concept(c) => Some(c.clone()),
            Filler::Instance(id) | Filler::CoRef(id) => self.get(id).map(|f| f.concept().to_string()),
            _ => None,
        }
    }
}

impl ReferenceResolver for SituationModel {
    fn instances_of(&self, concept: &str) -> Vec<FrameId> {
        self.index.get(concept).cloned().unwrap_or_default()
    }

    fn focus_concept(&self) -> Option<String> {
        self.focus.as_ref().map(|f| f.concept.clone())
    }
}

// -- agenda ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgendaStatus {
    Pending,
    Active,
    Blocked,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanInstance {
    pub script: String,
    pub bindings: BTreeMap<String, Filler>,
    /// Meaning representations produced by tool steps.
    pub products: BTreeMap<String, FrameDocument>,
    pub cursor: usize,
    pub missing: Vec<KnowledgeRequirement>,
    /// Set when an actionability check blocked the plan.
    pub blocked_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgendaEntry {
    pub id: u32,
    pub goal: FrameInstance,
    pub plan: PlanInstance,
    pub status: AgendaStatus,
    /// Goal concept plus a rendering of its theme; equal keys are the
    /// same goal.
    pub key: String,
    /// Situation version at the last verification.
    verified_at: Option<u64>,
    /// Teammate answers integrated for this entry's theme.
    informs: u32,
}

/// Ordered goals; at most one entry is active.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Agenda {
    pub entries: Vec<AgendaEntry>,
}

impl Agenda {
    pub fn active(&self) -> Option<usize> {
        self.entries.iter().position(|e| e.status == AgendaStatus::Active)
    }

    pub fn open_with_key(&self, key: &str) -> Option<&AgendaEntry> {
        self.entries
            .iter()
            .find(|e| e.key == key && !matches!(e.status, AgendaStatus::Done | AgendaStatus::Failed))
    }

    pub fn is_settled(&self) -> bool {
        self.entries.iter().all(|e| {
            matches!(
                e.status,
                AgendaStatus::Done | AgendaStatus::Failed | AgendaStatus::Blocked
            )
        })
    }
}

// -- precondition verification -------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub requirement: String,
    pub var: String,
    pub value: Filler,
    pub source: Source,
    /// Knowledge entry the value came from.
    pub cite: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Verification {
    pub bound: Vec<Binding>,
    pub missing: Vec<KnowledgeRequirement>,
}

impl Verification {
    pub fn satisfied(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Perceivable identifying features recorded on an entity.
fn identifying_features(theme: &FrameInstance) -> Features {
    let mut f = Features::new();
    if let Some(l) = theme.get("label").and_then(Filler::as_text) {
        f.insert("label".into(), l.to_string());
    }
    f
}

/// Resolves each requirement along its resolution order. Requirements that
/// only the teammate can resolve come back as missing.
pub fn verify_preconditions(
    plan: &PlanInstance,
    script: &Script,
    situation: &SituationModel,
    episodic: &EpisodicStore,
) -> Verification {
    let mut out = Verification::default();
    let theme = plan
        .bindings
        .get("theme")
        .and_then(|t| t.as_instance())
        .and_then(|id| situation.get(id));
    for req in &script.preconditions {
        if let Some(v) = plan.bindings.get(&req.var) {
            out.bound.push(Binding {
                requirement: req.subject.clone(),
                var: req.var.clone(),
                value: v.clone(),
                source: Source::SituationModel,
                cite: "plan-binding".into(),
            });
            continue;
        }
        let found = req.resolution_order.iter().find_map(|source| {
            let hit = match (source, req.subject.as_str(), theme) {
                (Source::SituationModel, "features-of-theme", Some(t)) => {
                    let f = identifying_features(t);
                    (!f.is_empty()).then(|| (Filler::Text(render_features(&f)), format!("situation:{}", t.id)))
                }
                (Source::SituationModel, "location-of-theme", Some(t)) => t
                    .get("located-in")
                    .filter(|l| l.as_concept().is_some())
                    .map(|l| (l.clone(), format!("situation:{}", t.id))),
                (Source::EpisodicMemory, "location-of-theme", Some(t)) => episodic
                    .lookup(&FramePattern::new(t.concept()).any("located-in"))
                    .and_then(|r| {
                        r.content
                            .get("located-in")
                            .map(|l| (l.clone(), format!("episodic:{}@{}", r.content.id, r.timestamp)))
                    }),
                _ => None,
            };
            hit.map(|(value, cite)| (*source, value, cite))
        });
        match found {
            Some((source, value, cite)) => out.bound.push(Binding {
                requirement: req.subject.clone(),
                var: req.var.clone(),
                value,
                source,
                cite,
            }),
            None => out.missing.push(req.clone()),
        }
    }
    out
}

// -- diagnosis ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnosis {
    pub gmr: FrameDocument,
    /// Cause link per hypothesis, in GMR order.
    pub cause_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosisError {
    #[error("symptom {0} has no theme")]
    NoTheme(String),
    #[error(transparent)]
    Kb(#[from] crate::kb::KbError),
}

fn agent_act(head: &str, rest: &str) -> FrameDocument {
    parse_frames(&format!("#{head}.1\n  agent #LEIA.1\n  beneficiary #HUMAN.1\n{rest}")).expect("well-formed GMR")
}

/// Hypotheses for a symptom from the ontology's cause links, with a
/// uniform epistemic prior.
pub fn diagnose(
    kb: &KnowledgeBase,
    symptom: &FrameInstance,
    situation: &SituationModel,
) -> Result<Diagnosis, DiagnosisError> {
    let theme = symptom
        .get("theme")
        .and_then(|t| situation.concept_of(t))
        .ok_or_else(|| DiagnosisError::NoTheme(symptom.concept().to_string()))?;
    let links = kb.find_causes(symptom.concept(), &theme)?;
    if links.is_empty() {
        return Ok(Diagnosis {
            gmr: agent_act("REPORT-NO-CAUSE", ""),
            cause_ids: Vec::new(),
        });
    }
    let causes: Vec<FrameInstance> = links.iter().map(|l| l.cause.clone()).collect();
    Ok(Diagnosis {
        gmr: build_alternative(&causes),
        cause_ids: links.iter().map(|l| l.id.clone()).collect(),
    })
}

// -- condition assessment -------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Assessment {
    pub component: String,
    pub installed: Option<String>,
    pub months: Option<i32>,
    pub service_life: Option<f64>,
    /// Remaining-life estimate in [0, 1].
    pub estimate: Option<f64>,
    pub gmr: FrameDocument,
    /// Log dates consulted.
    pub cites: Vec<String>,
}

/// Condition of a component from its install date and rated service life.
pub fn assess_condition(kb: &KnowledgeBase, component: &str, today: &str) -> Assessment {
    let name = component.to_lowercase();
    let entries = kb.search_logs(&name);
    let installed = entries
        .iter()
        .rfind(|e| e.component.eq_ignore_ascii_case(&name) && e.action == "installed")
        .map(|e| e.date.clone());
    let months = installed
        .as_deref()
        .and_then(|d| months_between(d, today))
        .filter(|m| *m >= 0);
    let life = kb
        .concept(&component.to_uppercase())
        .and_then(|c| c.property("service-life-months"))
        .and_then(Filler::as_number);
    let estimate = months.zip(life).map(|(m, l)| (1.0 - m as f64 / l).clamp(0.0, 1.0));
    let upper = component.to_uppercase();
    let gmr = match (estimate, months) {
        (Some(e), Some(m)) if e < WORN_THRESHOLD => agent_act(
            "RECOMMEND",
            &format!(
                "  theme #REPLACE.1\n#REPLACE.1\n  theme @{upper}\n  reason #STATE-OF-REPAIR.1\n#STATE-OF-REPAIR.1\n  domain @{upper}\n  range <{WORN_THRESHOLD}\n  age-months {m}\n"
            ),
        ),
        (Some(_), Some(m)) => agent_act(
            "REPORT-CONDITION",
            &format!(
                "  theme #STATE-OF-REPAIR.1\n#STATE-OF-REPAIR.1\n  domain @{upper}\n  range >={WORN_THRESHOLD}\n  age-months {m}\n"
            ),
        ),
        _ => agent_act(
            "REPORT-INABILITY",
            &format!("  reason \"assess the {name} without an installation record\"\n"),
        ),
    };
    Assessment {
        component: name,
        installed,
        months,
        service_life: life,
        estimate,
        gmr,
        cites: entries
            .iter()
            .map(|e| format!("log:{}:{}", e.date, e.component))
            .collect(),
    }
}

// -- action selection -----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("unbound variable ?{0}")]
    Unbound(String),
    #[error("{0} has no command realization")]
    NotRealizable(String),
    /// Physical feasibility or immediate executability failed.
    #[error("{0}")]
    NotActionable(String),
    #[error(transparent)]
    Schema(#[from] crate::command::SchemaError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub command: Command,
    /// `(rule, cites, note)` records explaining the choice.
    pub reasons: Vec<(String, Vec<String>, String)>,
}

fn property_text<'a>(kb: &'a KnowledgeBase, concept: &str, prop: &str) -> Option<&'a str> {
    kb.concept(concept)
        .and_then(|c| c.property(prop))
        .and_then(Filler::as_text)
}

/// Realizes a script command step as a tactical command and checks that
/// it can run now. `params` are already grounded; `gripper` is the current
/// gripper content.
pub fn select_action(
    kb: &KnowledgeBase,
    step_name: &str,
    params: &[(String, String)],
    gripper: Option<&str>,
) -> Result<Selection, ActionError> {
    let mut reasons = Vec::new();
    let mut name = step_name.to_string();
    let realizations: Vec<String> = kb
        .concept(step_name)
        .map(|c| {
            c.properties_named("realized-by")
                .filter_map(Filler::as_concept)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    if !realizations.is_empty() {
        let requires: Vec<&str> = kb
            .concept(step_name)
            .map(|c| c.properties_named("requires").filter_map(Filler::as_text).collect())
            .unwrap_or_default();
        let stops = |r: &str| property_text(kb, r, "stops-on-detection") == Some("yes");
        let chosen = realizations
            .iter()
            .find(|r| !requires.contains(&"stop-on-detection") || stops(r))
            .ok_or_else(|| ActionError::NotRealizable(step_name.to_string()))?;
        let mut cites = vec![format!("concept:{step_name}:requires")];
        for r in &realizations {
            cites.push(format!("concept:{r}:perception-loop"));
        }
        let rejected: Vec<String> = realizations
            .iter()
            .filter(|r| *r != chosen)
            .map(|r| {
                format!(
                    "{r} closes its perception loop at the {} layer and would overshoot under latency",
                    property_text(kb, r, "perception-loop").unwrap_or("unknown")
                )
            })
            .collect();
        reasons.push((
            "select-realization".to_string(),
            cites,
            format!(
                "{step_name} realized as {chosen}: perception loop {}; {}",
                property_text(kb, chosen, "perception-loop").unwrap_or("unknown"),
                rejected.join("; ")
            ),
        ));
        name = chosen.clone();
    }
    let cname = CommandName::parse(&name).ok_or_else(|| ActionError::NotRealizable(name.clone()))?;
    let schema = cname.schema();
    let params: Vec<(String, String)> = params
        .iter()
        .filter(|(k, _)| schema.iter().any(|p| p.name == k))
        .cloned()
        .collect();
    let command = Command::new(cname, &params)?;
    match cname {
        CommandName::Pickup if gripper.is_some() => {
            return Err(ActionError::NotActionable(format!(
                "pick up {} while the gripper holds {}",
                command.param("object").unwrap_or_default(),
                gripper.unwrap_or_default()
            )))
        }
        CommandName::Dropobject if gripper.is_none() => {
            return Err(ActionError::NotActionable(
                "drop an object with an empty gripper".into(),
            ))
        }
        CommandName::Search => {
            let zone = command.param("zone").unwrap_or_default().to_uppercase();
            if !kb.is_a(&zone, "ZONE") {
                return Err(ActionError::NotActionable(format!(
                    "reach unknown zone {}",
                    zone.to_lowercase()
                )));
            }
        }
        _ => {}
    }
    reasons.push((
        "actionability".to_string(),
        vec![format!("command:{cname}")],
        format!("{command} is feasible and executable now"),
    ));
    Ok(Selection { command, reasons })
}

// -- visual grounding -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmrError {
    #[error("VMR has no frames")]
    Empty,
    #[error("VMR lacks an object-id")]
    NoObjectId,
}

/// Whether a perceived object carries every expected feature.
pub fn ground_vmr(vmr: &FrameDocument, expected: &Features) -> Result<bool, VmrError> {
    let root = vmr.root().ok_or(VmrError::Empty)?;
    root.get("object-id").ok_or(VmrError::NoObjectId)?;
    Ok(expected.iter().all(|(k, want)| {
        root.get(k)
            .map(|have| render_filler(have).trim_matches('"') == want)
            .unwrap_or(false)
    }))
}

// -- the agent ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
struct Awaiting {
    entry: usize,
    command: Command,
    output: Option<String>,
}

#[derive(Clone, Debug)]
pub struct OntoAgent {
    pub kb: Arc<KnowledgeBase>,
    pub situation: SituationModel,
    pub episodic: EpisodicStore,
    pub agenda: Agenda,
    scenario_date: String,
    requester_location: String,
    latency: u64,
    /// Bumped on every situation refinement; blocked plans re-verify when
    /// it moves.
    version: u64,
    /// `(entry id, requirement)` → entry inform count when asked.
    questions: BTreeMap<(u32, String), u32>,
    awaiting: Option<Awaiting>,
    matched: Option<String>,
    gripper: Option<String>,
    next_entry: u32,
    tick: u64,
    out: Vec<AgentOutput>,
}

impl OntoAgent {
    /// Scene entities co-located with the teammate are known from the
    /// start, as is the fixture's episodic preload.
    pub fn new(kb: Arc<KnowledgeBase>, fixture: &ScenarioFixture) -> Self {
        let mut situation = SituationModel::new();
        situation.add("LEIA", Vec::new(), 0);
        let requester_location = fixture
            .nodes
            .iter()
            .min_by(|a, b| a.pos.dist(fixture.daniel).total_cmp(&b.pos.dist(fixture.daniel)))
            .map(|n| n.id.clone())
            .unwrap_or_else(|| format!("{},{}", fixture.daniel.x, fixture.daniel.y));
        situation.add(
            "HUMAN",
            vec![("location".into(), Filler::Text(requester_location.clone()))],
            0,
        );
        let home = fixture.zone_of(fixture.daniel).map(str::to_string);
        for o in &fixture.objects {
            if let crate::sim::Placement::At(p) = o.placement {
                if home.is_some() && fixture.zone_of(p).map(str::to_string) == home {
                    situation.add(&o.concept, vec![("object-id".into(), Filler::Text(o.id.clone()))], 0);
                }
            }
        }
        let mut episodic = EpisodicStore::new();
        for (t, f) in &fixture.episodic {
            episodic.record(*t, f.clone());
        }
        Self {
            kb,
            situation,
            episodic,
            agenda: Agenda::default(),
            scenario_date: fixture.scenario_date.clone(),
            requester_location,
            latency: 0,
            version: 0,
            questions: BTreeMap::new(),
            awaiting: None,
            matched: None,
            gripper: None,
            next_entry: 1,
            tick: 0,
            out: Vec::new(),
        }
    }

    pub fn with_latency(mut self, ticks: u64) -> Self {
        self.latency = ticks;
        self
    }

    fn note(&mut self, rule: &str, cites: Vec<String>, note: impl Into<String>) {
        self.out.push(AgentOutput::Log(Payload::Reasoning {
            rule: rule.to_string(),
            cites,
            note: note.into(),
        }));
    }

    fn say_gmr(&mut self, gmr: &FrameDocument, cite: String) {
        match gmr_to_utterance(gmr) {
            Ok(text) => {
                self.note(
                    "generate",
                    vec![cite],
                    format!("{} rendered", gmr.root().map_or("", |r| r.concept())),
                );
                self.out.push(AgentOutput::Say(text));
            }
            Err(e) => {
                self.note("generate", vec![cite], format!("no rendering: {e}"));
                self.say_inability("express that", "template:report-inability".into());
            }
        }
    }

    fn say_inability(&mut self, reason: &str, cite: String) {
        let reason: String = reason.chars().filter(|c| *c != '"' && *c != '\n').collect();
        let gmr = agent_act("REPORT-INABILITY", &format!("  reason \"{reason}\"\n"));
        if let Ok(text) = gmr_to_utterance(&gmr) {
            self.note("report-inability", vec![cite], reason);
            self.out.push(AgentOutput::Say(text));
        }
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    // -- ingest ----------------------------------------------------------

    fn ingest_utterance(&mut self, text: &str) {
        let tmr = match utterance_to_tmr(text, &self.situation, self.tick) {
            Ok(t) => t,
            Err(e) => {
                self.note(
                    "understand",
                    vec!["templates".into()],
                    format!("no interpretation: {e}"),
                );
                let gmr = agent_act("REQUEST-CLARIFICATION", "");
                self.say_gmr(&gmr, "template:request-clarification".into());
                return;
            }
        };
        let root = tmr.root().expect("non-empty TMR").clone();
        self.note(
            "understand",
            vec![format!("tmr:{}", root.id)],
            format!("{} understood", root.concept()),
        );
        match root.concept() {
            "DESCRIBE-MECHANICAL-PROBLEM" => self.ingest_problem(&tmr, &root),
            "REQUEST-INFO" => self.ingest_info_request(&tmr, &root),
            "REQUEST-ACTION-FETCH" => self.ingest_fetch(&tmr, &root),
            "INFORM" => self.ingest_inform(&tmr, &root),
            other => self.note(
                "unintegrable",
                vec![format!("concept:{other}")],
                format!("no goal or plan integrates {other}"),
            ),
        }
    }

    /// Follows `corefer` to the situation, or adds a new situation frame.
    fn situate(&mut self, tmr: &FrameDocument, frame: &FrameInstance) -> FrameId {
        if let Some(Filler::CoRef(id)) = frame.get("corefer") {
            return id.clone();
        }
        let slots = frame
            .slots
            .iter()
            .filter_map(|(s, f)| match f {
                Filler::Instance(_) => {
                    let inner = tmr.deref(f)?.clone();
                    Some((s.clone(), Filler::Instance(self.situate(tmr, &inner))))
                }
                _ => Some((s.clone(), f.clone())),
            })
            .collect();
        let id = self.situation.add(frame.concept(), slots, self.tick);
        self.bump();
        id
    }

    fn describe(&self, filler: &Filler) -> String {
        match filler {
            Filler::Instance(id) => match self.situation.get(id) {
                Some(f) => {
                    let inner: Vec<String> = f
                        .slots
                        .iter()
                        .map(|(s, v)| match v {
                            Filler::Instance(_) => format!("{s} {}", self.describe(v)),
                            _ => format!("{s} {}", render_filler(v)),
                        })
                        .collect();
                    format!("{}({})", f.concept(), inner.join(", "))
                }
                None => render_filler(filler),
            },
            Filler::CoRef(id) => format!("#{id}"),
            other => render_filler(other),
        }
    }

    fn goal_key(&self, goal: &str, theme_desc: &str) -> String {
        format!("{goal}|{theme_desc}")
    }

    fn post_goal(&mut self, goal: &str, theme: Filler, trigger: String) {
        let key = self.goal_key(goal, &self.describe(&theme));
        if let Some(e) = self.agenda.open_with_key(&key) {
            let id = e.id;
            self.note(
                "dedup-goal",
                vec![trigger],
                format!("{goal} already on the agenda as entry {id}"),
            );
            return;
        }
        let script = match self.kb.script_for_goal(goal) {
            Ok(s) => s.clone(),
            Err(e) => {
                self.note("post-goal", vec![trigger], e.to_string());
                self.say_inability(&format!("pursue {}", goal.to_lowercase()), format!("concept:{goal}"));
                return;
            }
        };
        let goal_id = self.situation.add(
            goal,
            vec![
                ("agent".into(), Filler::Instance(FrameId::new("LEIA", 1))),
                ("beneficiary".into(), Filler::Instance(FrameId::new("HUMAN", 1))),
                ("theme".into(), theme.clone()),
            ],
            self.tick,
        );
        self.bump();
        let goal_frame = self.situation.get(&goal_id).cloned().expect("just added");
        let mut bindings = BTreeMap::new();
        bindings.insert("theme".to_string(), theme);
        bindings.insert("requester".to_string(), Filler::Instance(FrameId::new("HUMAN", 1)));
        bindings.insert(
            "requester-location".to_string(),
            Filler::Text(self.requester_location.clone()),
        );
        let id = self.next_entry;
        self.next_entry += 1;
        self.note(
            "post-goal",
            vec![trigger],
            format!("{goal_id} placed on the agenda as entry {id}"),
        );
        self.note(
            "instantiate-plan",
            vec![format!("script:{}", script.id)],
            format!("plan for {goal_id} from script {}", script.id),
        );
        self.agenda.entries.push(AgendaEntry {
            id,
            goal: goal_frame,
            plan: PlanInstance {
                script: script.id.clone(),
                bindings,
                products: BTreeMap::new(),
                cursor: 0,
                missing: Vec::new(),
                blocked_reason: None,
            },
            status: AgendaStatus::Pending,
            key,
            verified_at: None,
            informs: 0,
        });
    }

    fn triggered_goal(&self, concept: &str, property: &str) -> Option<String> {
        self.kb
            .concept(concept)
            .and_then(|c| c.property(property))
            .and_then(Filler::as_concept)
            .map(str::to_string)
    }

    fn ingest_problem(&mut self, tmr: &FrameDocument, root: &FrameInstance) {
        let Some(goal) = self.triggered_goal(root.concept(), "triggers-goal") else {
            return self.note(
                "unintegrable",
                vec![format!("concept:{}", root.concept())],
                "no triggered goal",
            );
        };
        let Some(symptom) = root.get("theme").and_then(|t| tmr.deref(t)).cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", root.id)],
                "problem without a symptom",
            );
        };
        let theme_desc = {
            let inner: Vec<String> = symptom
                .slots
                .iter()
                .map(|(s, f)| {
                    let v = match tmr.deref(f).and_then(|x| x.get("corefer")) {
                        Some(Filler::CoRef(id)) => format!("#{id}"),
                        _ => render_filler(f),
                    };
                    format!("{s} {v}")
                })
                .collect();
            format!("{}({})", symptom.concept(), inner.join(", "))
        };
        let key = self.goal_key(&goal, &theme_desc);
        if let Some(e) = self.agenda.open_with_key(&key) {
            let id = e.id;
            return self.note(
                "dedup-goal",
                vec![format!("concept:{}:triggers-goal", root.concept())],
                format!("{goal} already on the agenda as entry {id}"),
            );
        }
        let id = self.situate(tmr, &symptom);
        self.post_goal(
            &goal,
            Filler::Instance(id),
            format!("concept:{}:triggers-goal", root.concept()),
        );
    }

    fn ingest_info_request(&mut self, tmr: &FrameDocument, root: &FrameInstance) {
        for m in tmr.frames.iter().filter(|f| f.concept() == "MODALITY") {
            if m.get("value").and_then(Filler::as_number) == Some(0.0) {
                if let Some(scope) = m.get("scope").and_then(|s| tmr.deref(s)) {
                    self.rule_out(scope);
                }
            }
        }
        let Some(theme) = root.get("theme").and_then(|t| tmr.deref(t)).cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", root.id)],
                "request without a theme",
            );
        };
        let Some(goal) = self.triggered_goal(theme.concept(), "assessed-by") else {
            return self.note(
                "unintegrable",
                vec![format!("concept:{}", theme.concept())],
                format!("no goal answers questions about {}", theme.concept()),
            );
        };
        let Some(domain) = theme.get("domain").cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", theme.id)],
                "assessment without a domain",
            );
        };
        self.post_goal(&goal, domain, format!("concept:{}:assessed-by", theme.concept()));
    }

    /// Sets the modality of a matching hypothesis to zero.
    fn rule_out(&mut self, cause: &FrameInstance) {
        let hypotheses: Vec<(FrameId, FrameId)> = self
            .situation
            .frames
            .frames
            .iter()
            .filter(|m| m.concept() == "MODALITY")
            .filter_map(|m| {
                let scope = m.get("scope")?.as_instance()?.clone();
                let target = self.situation.get(&scope)?;
                (target.concept() == cause.concept() && cause.slots.iter().all(|(s, f)| target.get(s) == Some(f)))
                    .then(|| (m.id.clone(), scope))
            })
            .collect();
        for (m, scope) in hypotheses {
            if self.situation.refine(&m, "value", Filler::Number(0.0), self.tick) {
                self.bump();
                self.note(
                    "rule-out",
                    vec![format!("situation:{m}")],
                    format!("teammate ruled out {scope}"),
                );
            }
        }
    }

    fn ingest_fetch(&mut self, tmr: &FrameDocument, root: &FrameInstance) {
        let Some(goal) = self.triggered_goal(root.concept(), "triggers-goal") else {
            return self.note(
                "unintegrable",
                vec![format!("concept:{}", root.concept())],
                "no triggered goal",
            );
        };
        let Some(theme) = root.get("theme").and_then(|t| tmr.deref(t)).cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", root.id)],
                "fetch without a theme",
            );
        };
        let desc = format!(
            "{}({})",
            theme.concept(),
            theme
                .slots
                .iter()
                .map(|(s, f)| format!("{s} {}", render_filler(f)))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let key = self.goal_key(&goal, &desc);
        if let Some(e) = self.agenda.open_with_key(&key) {
            let id = e.id;
            return self.note(
                "dedup-goal",
                vec![format!("concept:{}:triggers-goal", root.concept())],
                format!("{goal} already on the agenda as entry {id}"),
            );
        }
        let id = self.situate(tmr, &theme);
        self.situation.focus = Some(id.clone());
        self.post_goal(
            &goal,
            Filler::Instance(id),
            format!("concept:{}:triggers-goal", root.concept()),
        );
    }

    fn ingest_inform(&mut self, tmr: &FrameDocument, root: &FrameInstance) {
        let Some(theme) = root.get("theme").and_then(|t| tmr.deref(t)).cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", root.id)],
                "inform without a theme",
            );
        };
        let Some(Filler::CoRef(target)) = theme.get("corefer").cloned() else {
            return self.note(
                "unintegrable",
                vec![format!("tmr:{}", theme.id)],
                "inform about an unknown entity",
            );
        };
        let owner = self.agenda.entries.iter().position(|e| {
            !matches!(e.status, AgendaStatus::Done | AgendaStatus::Failed)
                && e.plan.bindings.get("theme").and_then(Filler::as_instance) == Some(&target)
        });
        let Some(owner) = owner else {
            return self.note(
                "unintegrable",
                vec![format!("situation:{target}")],
                format!("no open plan concerns {target}"),
            );
        };
        let mut changed = Vec::new();
        for (slot, filler) in theme.slots.iter().filter(|(s, _)| s != "corefer") {
            if self.situation.refine(&target, slot, filler.clone(), self.tick) {
                changed.push(format!("{slot} {}", render_filler(filler)));
            }
        }
        self.agenda.entries[owner].informs += 1;
        self.bump();
        self.note(
            "refine-situation",
            vec![format!("situation:{target}")],
            format!("{target} refined: {}", changed.join(", ")),
        );
    }

    fn ingest_outcome(&mut self, report: &ActionReport) {
        let Some(aw) = self.awaiting.clone() else {
            return self.note(
                "unintegrable",
                vec![format!("action:{}", report.id)],
                "outcome for no awaited command",
            );
        };
        if aw.command != report.command {
            return self.note(
                "unintegrable",
                vec![format!("action:{}", report.id)],
                format!("outcome for {} while awaiting {}", report.command, aw.command),
            );
        }
        self.awaiting = None;
        let entry = &self.agenda.entries[aw.entry];
        let script_cite = format!("script:{}", entry.plan.script);
        match report.status {
            OutcomeStatus::Succeeded => {
                if let Some(var) = &aw.output {
                    let value = self.matched.take().or_else(|| {
                        report
                            .detail
                            .as_deref()
                            .and_then(|d| d.strip_prefix("found "))
                            .map(str::to_string)
                    });
                    if let Some(v) = value {
                        self.agenda.entries[aw.entry]
                            .plan
                            .bindings
                            .insert(var.clone(), Filler::Text(v));
                    }
                }
                self.agenda.entries[aw.entry].plan.cursor += 1;
                self.note(
                    "advance-plan",
                    vec![script_cite],
                    format!("{} succeeded", report.command),
                );
            }
            _ => {
                self.agenda.entries[aw.entry].status = AgendaStatus::Failed;
                let reason = report
                    .detail
                    .clone()
                    .unwrap_or_else(|| format!("{:?}", report.status).to_lowercase());
                self.note(
                    "plan-failed",
                    vec![script_cite.clone()],
                    format!("{} failed: {reason}", report.command),
                );
                self.say_inability(
                    &format!("complete {}: {reason}", report.command.name.as_str().to_lowercase()),
                    script_cite,
                );
            }
        }
    }

    fn ingest_candidate(&mut self, c: &CandidateReport) {
        let Some(aw) = self.awaiting.clone() else {
            return self.note(
                "unintegrable",
                vec![format!("vmr:{}", c.object_id)],
                "candidate without a search",
            );
        };
        let expected = self.agenda.entries[aw.entry]
            .plan
            .bindings
            .get("features")
            .and_then(Filler::as_text)
            .and_then(parse_features)
            .unwrap_or_default();
        let vmr = parse_frames(&c.vmr).map_err(|e| e.to_string());
        let verdict = vmr
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|d| ground_vmr(d, &expected).map_err(|e| e.to_string()));
        let matched = match verdict {
            Ok(m) => m,
            Err(e) => {
                self.note(
                    "ground-vmr",
                    vec![format!("vmr:{}", c.object_id)],
                    format!("malformed VMR: {e}"),
                );
                false
            }
        };
        if let Ok(doc) = &vmr {
            if let Some(root) = doc.root() {
                let mut snapshot = root.clone();
                if let Some(zone) = aw.command.param("zone") {
                    snapshot.set("located-in", Filler::Concept(zone.to_uppercase()));
                }
                self.episodic.record(self.tick, snapshot);
            }
        }
        self.note(
            "ground-vmr",
            vec![format!("vmr:{}", c.object_id), "requirement:features-of-theme".into()],
            format!(
                "{} {} expected {}",
                c.object_id,
                if matched { "matches" } else { "does not match" },
                render_features(&expected)
            ),
        );
        if matched {
            self.matched = Some(c.object_id.clone());
        }
        self.out.push(AgentOutput::Verdict {
            object_id: c.object_id.clone(),
            matched,
        });
    }

    // -- agenda execution -------------------------------------------------

    fn next_runnable(&self) -> Option<usize> {
        if let Some(i) = self.agenda.active() {
            return Some(i);
        }
        self.agenda.entries.iter().position(|e| match e.status {
            AgendaStatus::Pending => true,
            AgendaStatus::Blocked => e.verified_at != Some(self.version),
            _ => false,
        })
    }

    fn advance(&mut self) {
        while self.awaiting.is_none() {
            let Some(i) = self.next_runnable() else { return };
            if self.agenda.entries[i].status != AgendaStatus::Active && !self.verify(i) {
                continue;
            }
            self.run_steps(i);
        }
    }

    /// Verifies preconditions; asks the teammate for what only they know.
    /// True when the entry became active.
    fn verify(&mut self, i: usize) -> bool {
        let entry = self.agenda.entries[i].clone();
        let Some(script) = self.kb.script(&entry.plan.script).cloned() else {
            self.agenda.entries[i].status = AgendaStatus::Failed;
            return false;
        };
        let was_blocked = entry.status == AgendaStatus::Blocked;
        let v = verify_preconditions(&entry.plan, &script, &self.situation, &self.episodic);
        for b in &v.bound {
            if entry.plan.bindings.contains_key(&b.var) {
                continue;
            }
            self.note(
                "bind-requirement",
                vec![
                    format!("requirement:{}", b.requirement),
                    b.cite.clone(),
                    format!("script:{}", script.id),
                ],
                format!("?{} = {} from {}", b.var, render_filler(&b.value), b.source.name()),
            );
            self.agenda.entries[i]
                .plan
                .bindings
                .insert(b.var.clone(), b.value.clone());
        }
        self.agenda.entries[i].verified_at = Some(self.version);
        if v.satisfied() {
            self.note(
                "verify-preconditions",
                vec![format!("script:{}", script.id)],
                format!("entry {} satisfied", entry.id),
            );
            let answered_features = was_blocked
                && self
                    .questions
                    .contains_key(&(entry.id, "features-of-theme".to_string()))
                && v.bound.iter().any(|b| b.requirement == "features-of-theme");
            let e = &mut self.agenda.entries[i];
            e.plan.missing.clear();
            e.plan.blocked_reason = None;
            e.status = AgendaStatus::Active;
            if answered_features {
                self.acknowledge(i);
            }
            return true;
        }
        let names: Vec<String> = v.missing.iter().map(|r| r.subject.clone()).collect();
        self.note(
            "verify-preconditions",
            names.iter().map(|n| format!("requirement:{n}")).collect(),
            format!("entry {} blocked on {}", entry.id, names.join(", ")),
        );
        let e = &mut self.agenda.entries[i];
        e.status = AgendaStatus::Blocked;
        e.plan.missing = v.missing.clone();
        for req in v.missing {
            let key = (entry.id, req.subject.clone());
            match self.questions.get(&key) {
                None => {
                    self.activate_metascript(i, &req);
                    return false;
                }
                Some(informs_then) if entry.informs > *informs_then => {
                    self.agenda.entries[i].status = AgendaStatus::Failed;
                    self.note(
                        "plan-failed",
                        vec![format!("requirement:{}", req.subject)],
                        "answer did not resolve the requirement and it was already asked once",
                    );
                    let what = req.subject.replace("-of-theme", "").replace('-', " ");
                    self.say_inability(
                        &format!("determine the {what} from that answer"),
                        format!("script:{}", script.id),
                    );
                    return false;
                }
                Some(_) => {}
            }
        }
        false
    }

    fn acknowledge(&mut self, i: usize) {
        let plan = &self.agenda.entries[i].plan;
        let theme = plan
            .bindings
            .get("theme")
            .and_then(Filler::as_instance)
            .and_then(|id| self.situation.get(id));
        let Some(theme) = theme else { return };
        let Some(label) = theme.get("label").map(render_filler) else {
            return;
        };
        let gmr = agent_act(
            "ACKNOWLEDGE",
            &format!("  theme #{c}.1\n#{c}.1\n  label {label}\n", c = theme.concept()),
        );
        self.say_gmr(&gmr, "template:acknowledge".into());
    }

    /// Emits the question a metascript resolves a requirement with; at most
    /// once per (entry, requirement).
    fn activate_metascript(&mut self, i: usize, req: &KnowledgeRequirement) {
        let entry_id = self.agenda.entries[i].id;
        let informs = self.agenda.entries[i].informs;
        self.questions.insert((entry_id, req.subject.clone()), informs);
        let Some(meta) = self.kb.metascript_for(&req.subject).cloned() else {
            self.agenda.entries[i].status = AgendaStatus::Failed;
            self.note(
                "activate-metascript",
                vec![format!("requirement:{}", req.subject)],
                "no metascript resolves this requirement",
            );
            let what = req.subject.replace("-of-theme", "").replace('-', " ");
            return self.say_inability(&format!("find out the {what}"), format!("requirement:{}", req.subject));
        };
        self.note(
            "activate-metascript",
            vec![format!("script:{}", meta.id), format!("requirement:{}", req.subject)],
            format!("asking the teammate to resolve {}", req.subject),
        );
        let bindings = self.agenda.entries[i].plan.bindings.clone();
        for step in &meta.steps {
            if step.kind == StepKind::Speech {
                self.speak_step(step, &bindings, &BTreeMap::new(), format!("script:{}", meta.id));
            }
        }
    }

    fn resolve_arg(&self, arg: &Arg, bindings: &BTreeMap<String, Filler>) -> Result<Filler, ActionError> {
        match arg {
            Arg::Lit(l) => Ok(Filler::Text(l.clone())),
            Arg::Var(v) => bindings.get(v).cloned().ok_or_else(|| ActionError::Unbound(v.clone())),
        }
    }

    /// Command-parameter text for a filler.
    fn param_text(&self, f: &Filler) -> String {
        match f {
            Filler::Concept(c) => c.to_lowercase(),
            Filler::Instance(id) | Filler::CoRef(id) => id.concept.to_lowercase(),
            Filler::Text(t) => t.clone(),
            other => render_filler(other),
        }
    }

    fn speak_step(
        &mut self,
        step: &Step,
        bindings: &BTreeMap<String, Filler>,
        products: &BTreeMap<String, FrameDocument>,
        cite: String,
    ) {
        for (_, arg) in &step.params {
            if let Arg::Var(v) = arg {
                if let Some(doc) = products.get(v) {
                    let doc = doc.clone();
                    return self.say_gmr(&doc, cite);
                }
            }
        }
        let theme = bindings
            .get("theme")
            .and_then(Filler::as_instance)
            .and_then(|id| self.situation.get(id))
            .cloned();
        let age = theme.as_ref().and_then(|t| t.get("age")).map(render_filler);
        let concept = theme.as_ref().map(|t| t.concept().to_string()).unwrap_or_default();
        let gmr = match (step.name.as_str(), age) {
            ("REQUEST-INFO", Some(age)) => {
                let property = match step.param("property") {
                    Some(Arg::Lit(p)) => p.clone(),
                    _ => "features".into(),
                };
                agent_act(
                    "REQUEST-INFO",
                    &format!("  theme #{concept}.1\n#{concept}.1\n  age {age}\n  property {property}\n"),
                )
            }
            ("REPORT-DELIVERED", Some(age)) => agent_act(
                "REPORT-DELIVERED",
                &format!("  theme #{concept}.1\n#{concept}.1\n  age {age}\n"),
            ),
            (other, _) => {
                let what = other.to_lowercase().replace('-', " ");
                return self.say_inability(&format!("phrase {what}"), cite);
            }
        };
        self.say_gmr(&gmr, cite);
    }

    fn run_steps(&mut self, i: usize) {
        loop {
            let plan = self.agenda.entries[i].plan.clone();
            let Some(script) = self.kb.script(&plan.script).cloned() else {
                self.agenda.entries[i].status = AgendaStatus::Failed;
                return;
            };
            let cite = format!("script:{}#{}", script.id, plan.cursor + 1);
            let Some(step) = script.steps.get(plan.cursor).cloned() else {
                self.agenda.entries[i].status = AgendaStatus::Done;
                self.note(
                    "plan-done",
                    vec![format!("script:{}", script.id)],
                    format!("entry {} done", self.agenda.entries[i].id),
                );
                return;
            };
            match step.kind {
                StepKind::Tool => {
                    if let Err(reason) = self.run_tool(i, &step, cite.clone()) {
                        self.agenda.entries[i].status = AgendaStatus::Failed;
                        self.note("plan-failed", vec![cite.clone()], reason.clone());
                        self.say_inability(&reason, cite);
                        return;
                    }
                    self.agenda.entries[i].plan.cursor += 1;
                }
                StepKind::Speech => {
                    self.speak_step(&step, &plan.bindings, &plan.products, cite);
                    self.agenda.entries[i].plan.cursor += 1;
                }
                StepKind::Command => {
                    let params: Result<Vec<(String, String)>, ActionError> = step
                        .params
                        .iter()
                        .map(|(k, a)| {
                            self.resolve_arg(a, &plan.bindings)
                                .map(|f| (k.clone(), self.param_text(&f)))
                        })
                        .collect();
                    let selection =
                        params.and_then(|p| select_action(&self.kb, &step.name, &p, self.gripper.as_deref()));
                    match selection {
                        Ok(sel) => {
                            for (rule, cites, note) in sel.reasons {
                                self.note(&rule, cites, note);
                            }
                            self.note("dispatch", vec![cite], sel.command.to_string());
                            self.out.push(AgentOutput::Command(sel.command.clone()));
                            self.awaiting = Some(Awaiting {
                                entry: i,
                                command: sel.command,
                                output: step.output.clone(),
                            });
                            return;
                        }
                        Err(ActionError::NotActionable(reason)) => {
                            let first = self.agenda.entries[i].plan.blocked_reason.is_none();
                            let e = &mut self.agenda.entries[i];
                            e.status = AgendaStatus::Blocked;
                            e.plan.blocked_reason = Some(reason.clone());
                            e.verified_at = Some(self.version);
                            self.note("actionability", vec![cite.clone()], format!("blocked: {reason}"));
                            if first {
                                self.say_inability(&reason, cite);
                            }
                            return;
                        }
                        Err(e) => {
                            self.agenda.entries[i].status = AgendaStatus::Failed;
                            self.note("plan-failed", vec![cite.clone()], e.to_string());
                            self.say_inability(&format!("carry out {}: {e}", step.name.to_lowercase()), cite);
                            return;
                        }
                    }
                }
                StepKind::SubPlan => {
                    self.agenda.entries[i].status = AgendaStatus::Failed;
                    self.note("plan-failed", vec![cite.clone()], "sub-plans are not executable");
                    self.say_inability(&format!("plan {}", step.name.to_lowercase()), cite);
                    return;
                }
            }
        }
    }

    fn run_tool(&mut self, i: usize, step: &Step, cite: String) -> Result<(), String> {
        let bindings = self.agenda.entries[i].plan.bindings.clone();
        match step.name.as_str() {
            "SEARCH-ONTOLOGY" => {
                let arg = step.param("symptom").cloned().unwrap_or(Arg::Var("theme".into()));
                let symptom = self
                    .resolve_arg(&arg, &bindings)
                    .ok()
                    .and_then(|f| f.as_instance().cloned())
                    .and_then(|id| self.situation.get(&id).cloned())
                    .ok_or("identify the symptom")?;
                let d = diagnose(&self.kb, &symptom, &self.situation).map_err(|e| e.to_string())?;
                let k = d.cause_ids.len();
                self.note(
                    "diagnose",
                    vec![cite, format!("concept:{}", symptom.concept())],
                    format!("{k} cause link(s) for {}", symptom.id),
                );
                for id in &d.cause_ids {
                    let link = self.kb.cause_link(id).cloned();
                    if let Some(link) = link {
                        let cause = &link.cause;
                        let slots = cause.slots.clone();
                        let cid = self.situation.add(cause.concept(), slots, self.tick);
                        let mid = self.situation.add(
                            "MODALITY",
                            vec![
                                ("type".into(), Filler::Text("EPISTEMIC".into())),
                                ("value".into(), Filler::Number(1.0 / k as f64)),
                                ("scope".into(), Filler::Instance(cid.clone())),
                            ],
                            self.tick,
                        );
                        self.bump();
                        self.note(
                            "hypothesis",
                            vec![format!("cause-link:{id}")],
                            format!("{cid} held at {} via {mid}", 1.0 / k as f64),
                        );
                    }
                }
                if let Some(out) = &step.output {
                    self.agenda.entries[i].plan.products.insert(out.clone(), d.gmr);
                }
                Ok(())
            }
            "SEARCHLOGS" => {
                let arg = step.param("component").cloned().unwrap_or(Arg::Var("theme".into()));
                let component = self
                    .resolve_arg(&arg, &bindings)
                    .ok()
                    .map(|f| self.param_text(&f))
                    .ok_or("identify the component")?;
                let a = assess_condition(&self.kb, &component, &self.scenario_date);
                let entries: Vec<serde_json::Value> = self
                    .kb
                    .search_logs(&component)
                    .iter()
                    .map(|e| json!({"date": e.date, "component": e.component, "action": e.action, "note": e.note}))
                    .collect();
                self.out.push(AgentOutput::Log(Payload::Tool {
                    name: "SEARCHLOGS".into(),
                    arguments: json!({"query": component}),
                    result: serde_json::Value::Array(entries),
                }));
                let mut cites = vec![cite];
                cites.extend(a.cites.iter().cloned());
                cites.push(format!("concept:{}:service-life-months", component.to_uppercase()));
                self.note(
                    "assess-condition",
                    cites,
                    format!(
                        "{} installed {} ({} months), service life {} months, estimate {}",
                        a.component,
                        a.installed.as_deref().unwrap_or("unknown"),
                        a.months.map_or("?".into(), |m| m.to_string()),
                        a.service_life.map_or("?".into(), |l| l.to_string()),
                        a.estimate.map_or("?".into(), |e| format!("{e:.2}"))
                    ),
                );
                if let Some(out) = &step.output {
                    self.agenda.entries[i].plan.products.insert(out.clone(), a.gmr);
                }
                Ok(())
            }
            other => Err(format!("use the tool {}", other.to_lowercase())),
        }
    }
}

impl StrategicAgent for OntoAgent {
    fn identity(&self) -> AgentIdentity {
        AgentIdentity {
            agent: "ontoagent".into(),
            model: None,
            condition: None,
        }
    }

    fn latency(&self) -> u64 {
        self.latency
    }

    fn grounding(&self) -> Grounding {
        Grounding::Strategic
    }

    fn step(&mut self, input: &AgentInput) -> Result<Vec<AgentOutput>, crate::agent::AgentError> {
        self.tick = input.tick;
        if input.frame.gripper != self.gripper {
            self.gripper = input.frame.gripper.clone();
            let holding = Filler::Text(self.gripper.clone().unwrap_or_else(|| "nothing".into()));
            if self
                .situation
                .refine(&FrameId::new("LEIA", 1), "holding", holding, self.tick)
            {
                self.bump();
            }
        }
        for c in &input.candidates {
            self.ingest_candidate(c);
        }
        for o in &input.outcomes {
            self.ingest_outcome(o);
        }
        for u in &input.utterances {
            self.ingest_utterance(u);
        }
        self.advance();
        Ok(std::mem::take(&mut self.out))
    }

    fn is_idle(&self) -> bool {
        self.awaiting.is_none() && self.agenda.is_settled()
    }
}
