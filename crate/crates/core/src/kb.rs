//! Knowledge resources: ontology with causal links, procedural scripts,
//! episodic memory and the engine service log.
//!
//! Ontology file:
//!
//! ```text
//! CONCEPT OVERHEAT
//!   IS-A MALFUNCTION
//!   SLOT theme @ENGINE
//!   PROPERTY triggers-goal @HYPOTHESIZE-MECHANICAL-PROBLEM-CAUSE
//!   CAUSED-BY overheat-obstruct OBSTRUCT(theme @PIPE) WHEN theme @ENGINE
//! ```
//!
//! Scripts file:
//!
//! ```text
//! SCRIPT fetch
//!   GOAL FETCH
//!   PRECONDITION features-of-theme AS features FROM situation-model ask-teammate
//!   STEP command PICKUP object=?target
//! METASCRIPT ask-teammate-features
//!   RESOLVES features-of-theme
//!   STEP speech REQUEST-INFO property=features
//! ```
//!
//! Service log: `date<TAB>component<TAB>action<TAB>note`, ISO dates.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::notation::parse_filler;
use crate::frames::{render_filler, Filler, FrameId, FrameInstance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}:{line}: unknown concept {concept}")]
    Dangling {
        file: &'static str,
        line: usize,
        concept: String,
    },
    #[error("IS-A cycle through {0}")]
    Cycle(String),
    #[error("script {script}: variable ?{var} is not bound before use")]
    Unbound { script: String, var: String },
    #[error("more than one metascript resolves {0}")]
    DuplicateMetascript(String),
    #[error("more than one script serves goal {0}")]
    DuplicateGoal(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("no script for goal {0}")]
    NoScript(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauseLink {
    pub id: String,
    pub symptom: String,
    /// Cause template: concept plus constrained slots.
    pub cause: FrameInstance,
    /// `(slot, concept)`: the symptom's slot must name this concept or a
    /// descendant.
    pub applies_when: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub parents: Vec<String>,
    pub slot_defs: Vec<(String, Filler)>,
    /// Free-form properties; a name may repeat.
    pub properties: Vec<(String, Filler)>,
    pub causal_links: Vec<CauseLink>,
}

impl Concept {
    pub fn property(&self, name: &str) -> Option<&Filler> {
        self.properties.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn properties_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Filler> + 'a {
        self.properties.iter().filter(move |(n, _)| n == name).map(|(_, f)| f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    SituationModel,
    EpisodicMemory,
    AskTeammate,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::SituationModel => "situation-model",
            Source::EpisodicMemory => "episodic-memory",
            Source::AskTeammate => "ask-teammate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "situation-model" => Some(Source::SituationModel),
            "episodic-memory" => Some(Source::EpisodicMemory),
            "ask-teammate" => Some(Source::AskTeammate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRequirement {
    /// Requirement kind, e.g. `features-of-theme`.
    pub subject: String,
    /// Plan variable bound on resolution.
    pub var: String,
    pub resolution_order: Vec<Source>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arg {
    Var(String),
    Lit(String),
}

impl Arg {
    fn parse(s: &str) -> Self {
        match s.strip_prefix('?') {
            Some(v) => Arg::Var(v.to_string()),
            None => Arg::Lit(s.to_string()),
        }
    }

    fn render(&self) -> String {
        match self {
            Arg::Var(v) => format!("?{v}"),
            Arg::Lit(l) => l.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// A tactical command or an abstract motion the agent realizes as one.
    Command,
    Tool,
    Speech,
    SubPlan,
}

impl StepKind {
    fn name(self) -> &'static str {
        match self {
            StepKind::Command => "command",
            StepKind::Tool => "tool",
            StepKind::Speech => "speech",
            StepKind::SubPlan => "subplan",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "command" => Some(StepKind::Command),
            "tool" => Some(StepKind::Tool),
            "speech" => Some(StepKind::Speech),
            "subplan" => Some(StepKind::SubPlan),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub kind: StepKind,
    /// Concept naming the command, tool, speech act or sub-goal.
    pub name: String,
    pub params: Vec<(String, Arg)>,
    pub output: Option<String>,
}

impl Step {
    pub fn param(&self, name: &str) -> Option<&Arg> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub id: String,
    pub goal_concept: Option<String>,
    pub preconditions: Vec<KnowledgeRequirement>,
    pub steps: Vec<Step>,
    pub is_metascript: bool,
    pub metascript_trigger: Option<String>,
}

/// Variables every plan has bound at instantiation.
pub const BUILTIN_VARS: &[&str] = &["theme", "requester", "requester-location"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceLogEntry {
    /// `YYYY-MM-DD`
    pub date: String,
    pub component: String,
    pub action: String,
    pub note: String,
}

/// Parses `YYYY-MM-DD` into (year, month, day).
pub fn parse_date(s: &str) -> Option<(i32, u32, u32)> {
    let mut it = s.split('-');
    let y = it.next()?.parse().ok()?;
    let m: u32 = it.next()?.parse().ok()?;
    let d: u32 = it.next()?.parse().ok()?;
    if it.next().is_some() || !(1..=12).contains(&m) || !(1..=31).contains(&d) || s.len() != 10 {
        return None;
    }
    Some((y, m, d))
}

/// Whole months elapsed from `from` to `to`.
pub fn months_between(from: &str, to: &str) -> Option<i32> {
    let (y0, m0, d0) = parse_date(from)?;
    let (y1, m1, d1) = parse_date(to)?;
    let mut months = (y1 - y0) * 12 + m1 as i32 - m0 as i32;
    if d1 < d0 {
        months -= 1;
    }
    Some(months)
}

/// Pattern for episodic lookup; `None` slots match any filler and bind it.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePattern {
    pub concept: String,
    pub slots: Vec<(String, Option<Filler>)>,
}

impl FramePattern {
    pub fn new(concept: impl Into<String>) -> Self {
        Self {
            concept: concept.into(),
            slots: Vec::new(),
        }
    }

    pub fn any(mut self, slot: impl Into<String>) -> Self {
        self.slots.push((slot.into(), None));
        self
    }

    pub fn exact(mut self, slot: impl Into<String>, filler: Filler) -> Self {
        self.slots.push((slot.into(), Some(filler)));
        self
    }

    pub fn unifies(&self, frame: &FrameInstance) -> bool {
        frame.concept() == self.concept
            && self.slots.iter().all(|(s, want)| match (frame.get(s), want) {
                (Some(_), None) => true,
                (Some(have), Some(want)) => have == want,
                (None, _) => false,
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub timestamp: u64,
    pub content: FrameInstance,
}

/// Append-only, timestamp-ordered memory of entity snapshots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodicStore {
    records: Vec<EpisodicRecord>,
}

impl EpisodicStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; timestamps earlier than the last record are raised
    /// to it so store order stays non-decreasing.
    pub fn record(&mut self, timestamp: u64, content: FrameInstance) {
        let floor = self.records.last().map_or(0, |r| r.timestamp);
        self.records.push(EpisodicRecord {
            timestamp: timestamp.max(floor),
            content,
        });
    }

    pub fn records(&self) -> &[EpisodicRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Most recent unifying record; on equal timestamps the later one.
    pub fn lookup(&self, pattern: &FramePattern) -> Option<&EpisodicRecord> {
        self.records.iter().rev().find(|r| pattern.unifies(&r.content))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CauseSearch {
    /// Follow causes of causes breadth-first.
    pub transitive: bool,
    /// Also use links declared on ancestors of the symptom.
    pub inherit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    /// Declaration order.
    pub concepts: Vec<Concept>,
    pub scripts: Vec<Script>,
    pub service_log: Vec<ServiceLogEntry>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl KnowledgeBase {
    pub fn concept(&self, name: &str) -> Option<&Concept> {
        self.index.get(name).map(|&i| &self.concepts[i])
    }

    pub fn has_concept(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Reflexive-transitive IS-A.
    pub fn is_a(&self, concept: &str, ancestor: &str) -> bool {
        let mut queue = VecDeque::from([concept.to_string()]);
        let mut seen = BTreeSet::new();
        while let Some(c) = queue.pop_front() {
            if c == ancestor {
                return true;
            }
            if !seen.insert(c.clone()) {
                continue;
            }
            if let Some(def) = self.concept(&c) {
                queue.extend(def.parents.iter().cloned());
            }
        }
        false
    }

    fn ancestors(&self, concept: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([concept.to_string()]);
        while let Some(c) = queue.pop_front() {
            if out.contains(&c) {
                continue;
            }
            if let Some(def) = self.concept(&c) {
                queue.extend(def.parents.iter().cloned());
            }
            out.push(c);
        }
        out
    }

    fn link_admits(&self, link: &CauseLink, theme: &str) -> bool {
        match &link.applies_when {
            None => true,
            Some((_, concept)) => self.is_a(theme, concept),
        }
    }

    /// Cause links for a symptom whose applicability admits the theme, in
    /// declaration order.
    pub fn find_causes(&self, symptom: &str, theme: &str) -> Result<Vec<&CauseLink>, KbError> {
        self.find_causes_with(symptom, theme, CauseSearch::default())
    }

    pub fn find_causes_with(&self, symptom: &str, theme: &str, mode: CauseSearch) -> Result<Vec<&CauseLink>, KbError> {
        if !self.has_concept(symptom) {
            return Err(KbError::UnknownConcept(symptom.to_string()));
        }
        let mut out: Vec<&CauseLink> = Vec::new();
        let mut queue = VecDeque::from([symptom.to_string()]);
        let mut visited = BTreeSet::new();
        while let Some(s) = queue.pop_front() {
            if !visited.insert(s.clone()) {
                continue;
            }
            let sources = if mode.inherit {
                self.ancestors(&s)
            } else {
                vec![s.clone()]
            };
            for src in sources {
                let Some(def) = self.concept(&src) else { continue };
                for link in &def.causal_links {
                    if self.link_admits(link, theme) && !out.iter().any(|l| l.id == link.id) {
                        out.push(link);
                        if mode.transitive {
                            queue.push_back(link.cause.concept().to_string());
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn cause_link(&self, id: &str) -> Option<&CauseLink> {
        self.concepts
            .iter()
            .flat_map(|c| c.causal_links.iter())
            .find(|l| l.id == id)
    }

    pub fn script(&self, id: &str) -> Option<&Script> {
        self.scripts.iter().find(|s| s.id == id)
    }

    pub fn script_for_goal(&self, goal: &str) -> Result<&Script, KbError> {
        self.scripts
            .iter()
            .find(|s| !s.is_metascript && s.goal_concept.as_deref() == Some(goal))
            .ok_or_else(|| KbError::NoScript(goal.to_string()))
    }

    pub fn metascript_for(&self, requirement: &str) -> Option<&Script> {
        self.scripts
            .iter()
            .find(|s| s.is_metascript && s.metascript_trigger.as_deref() == Some(requirement))
    }

    /// Case-insensitive substring match over component, action and note, in
    /// date order.
    pub fn search_logs(&self, query: &str) -> Vec<&ServiceLogEntry> {
        let q = query.trim().to_lowercase();
        let mut hits: Vec<&ServiceLogEntry> = self
            .service_log
            .iter()
            .filter(|e| {
                q.is_empty()
                    || e.component.to_lowercase().contains(&q)
                    || e.action.to_lowercase().contains(&q)
                    || e.note.to_lowercase().contains(&q)
            })
            .collect();
        hits.sort_by(|a, b| a.date.cmp(&b.date));
        hits
    }

    fn reindex(&mut self) {
        self.index = self
            .concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
    }
}

// -- loading --------------------------------------------------------------

struct Line<'a> {
    no: usize,
    indent: usize,
    text: &'a str,
}

fn lines(src: &str) -> impl Iterator<Item = Line<'_>> {
    src.lines().enumerate().filter_map(|(i, raw)| {
        let code = match raw.find("//") {
            Some(p) => &raw[..p],
            None => raw,
        };
        let text = code.trim();
        (!text.is_empty()).then(|| Line {
            no: i + 1,
            indent: code.len() - code.trim_start().len(),
            text,
        })
    })
}

fn perr(file: &'static str, line: &Line<'_>, message: impl Into<String>) -> KbError {
    KbError::Parse {
        file,
        line: line.no,
        column: line.indent + 1,
        message: message.into(),
    }
}

fn split_head(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(p) => (&s[..p], s[p..].trim_start()),
        None => (s, ""),
    }
}

fn is_concept_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '-')
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

fn parse_slot_filler(file: &'static str, line: &Line<'_>, body: &str) -> Result<(String, Filler), KbError> {
    let (slot, filler) = split_head(body);
    if !is_ident(slot) || filler.is_empty() {
        return Err(perr(file, line, format!("expected `slot filler`, found `{body}`")));
    }
    let filler = parse_filler(filler).map_err(|m| perr(file, line, m))?;
    Ok((slot.to_string(), filler))
}

/// `CONCEPT(slot filler, slot filler)`
fn parse_template(file: &'static str, line: &Line<'_>, s: &str) -> Result<FrameInstance, KbError> {
    let open = s.find('(').ok_or_else(|| perr(file, line, "expected `CONCEPT(...)`"))?;
    if !s.ends_with(')') {
        return Err(perr(file, line, "unterminated cause template"));
    }
    let concept = &s[..open];
    if !is_concept_name(concept) {
        return Err(perr(file, line, format!("bad concept name `{concept}`")));
    }
    let mut frame = FrameInstance::new(FrameId::new(concept, 1));
    let inner = s[open + 1..s.len() - 1].trim();
    if !inner.is_empty() {
        for part in inner.split(',') {
            let (slot, filler) = parse_slot_filler(file, line, part.trim())?;
            frame.set(slot, filler);
        }
    }
    Ok(frame)
}

fn concept_refs(filler: &Filler) -> Option<&str> {
    match filler {
        Filler::Concept(c) => Some(c),
        Filler::Instance(id) | Filler::CoRef(id) => Some(&id.concept),
        _ => None,
    }
}

pub fn parse_ontology(src: &str) -> Result<Vec<Concept>, KbError> {
    const F: &str = "ontology";
    let mut concepts: Vec<Concept> = Vec::new();
    let mut refs: Vec<(usize, String)> = Vec::new();
    for line in lines(src) {
        let (head, rest) = split_head(line.text);
        if line.indent == 0 {
            if head != "CONCEPT" || !is_concept_name(rest) {
                return Err(perr(F, &line, "expected `CONCEPT NAME`"));
            }
            if concepts.iter().any(|c| c.name == rest) {
                return Err(perr(F, &line, format!("duplicate concept {rest}")));
            }
            concepts.push(Concept {
                name: rest.to_string(),
                parents: Vec::new(),
                slot_defs: Vec::new(),
                properties: Vec::new(),
                causal_links: Vec::new(),
            });
            continue;
        }
        let current = concepts
            .last_mut()
            .ok_or_else(|| perr(F, &line, "entry outside a CONCEPT block"))?;
        match head {
            "IS-A" => {
                for p in rest.split_whitespace() {
                    if !is_concept_name(p) {
                        return Err(perr(F, &line, format!("bad parent `{p}`")));
                    }
                    current.parents.push(p.to_string());
                    refs.push((line.no, p.to_string()));
                }
            }
            "SLOT" | "PROPERTY" => {
                let (slot, filler) = parse_slot_filler(F, &line, rest)?;
                if let Some(c) = concept_refs(&filler) {
                    refs.push((line.no, c.to_string()));
                }
                if head == "SLOT" {
                    current.slot_defs.push((slot, filler));
                } else {
                    current.properties.push((slot, filler));
                }
            }
            "CAUSED-BY" => {
                let (id, rest) = split_head(rest);
                if !is_ident(id) {
                    return Err(perr(F, &line, format!("bad cause link id `{id}`")));
                }
                let (template, when) = match rest.find(" WHEN ") {
                    Some(p) => (rest[..p].trim(), Some(rest[p + 6..].trim())),
                    None => (rest.trim(), None),
                };
                let cause = parse_template(F, &line, template)?;
                refs.push((line.no, cause.concept().to_string()));
                for (_, f) in &cause.slots {
                    if let Some(c) = concept_refs(f) {
                        refs.push((line.no, c.to_string()));
                    }
                }
                let applies_when = match when {
                    None => None,
                    Some(w) => match parse_slot_filler(F, &line, w)? {
                        (slot, Filler::Concept(c)) => {
                            refs.push((line.no, c.clone()));
                            Some((slot, c))
                        }
                        _ => return Err(perr(F, &line, "WHEN expects `slot @CONCEPT`")),
                    },
                };
                current.causal_links.push(CauseLink {
                    id: id.to_string(),
                    symptom: current.name.clone(),
                    cause,
                    applies_when,
                });
            }
            other => return Err(perr(F, &line, format!("unknown ontology entry `{other}`"))),
        }
    }
    let names: BTreeSet<&str> = concepts.iter().map(|c| c.name.as_str()).collect();
    if let Some((line, c)) = refs.iter().find(|(_, c)| !names.contains(c.as_str())) {
        return Err(KbError::Dangling {
            file: F,
            line: *line,
            concept: c.clone(),
        });
    }
    let mut ids = BTreeSet::new();
    for link in concepts.iter().flat_map(|c| &c.causal_links) {
        if !ids.insert(link.id.as_str()) {
            return Err(KbError::Parse {
                file: F,
                line: 0,
                column: 0,
                message: format!("duplicate cause link id {}", link.id),
            });
        }
    }
    check_acyclic(&concepts)?;
    Ok(concepts)
}

fn check_acyclic(concepts: &[Concept]) -> Result<(), KbError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let index: BTreeMap<&str, usize> = concepts.iter().enumerate().map(|(i, c)| (c.name.as_str(), i)).collect();
    let mut mark = vec![Mark::New; concepts.len()];
    fn visit(i: usize, concepts: &[Concept], index: &BTreeMap<&str, usize>, mark: &mut [Mark]) -> Result<(), KbError> {
        match mark[i] {
            Mark::Done => return Ok(()),
            Mark::Open => return Err(KbError::Cycle(concepts[i].name.clone())),
            Mark::New => {}
        }
        mark[i] = Mark::Open;
        for p in &concepts[i].parents {
            if let Some(&j) = index.get(p.as_str()) {
                visit(j, concepts, index, mark)?;
            }
        }
        mark[i] = Mark::Done;
        Ok(())
    }
    for i in 0..concepts.len() {
        visit(i, concepts, &index, &mut mark)?;
    }
    Ok(())
}

pub fn parse_scripts(src: &str) -> Result<Vec<Script>, KbError> {
    const F: &str = "scripts";
    let mut scripts: Vec<Script> = Vec::new();
    for line in lines(src) {
        let (head, rest) = split_head(line.text);
        if line.indent == 0 {
            let is_meta = match head {
                "SCRIPT" => false,
                "METASCRIPT" => true,
                _ => return Err(perr(F, &line, "expected `SCRIPT id` or `METASCRIPT id`")),
            };
            if !is_ident(rest) {
                return Err(perr(F, &line, format!("bad script id `{rest}`")));
            }
            if scripts.iter().any(|s| s.id == rest) {
                return Err(perr(F, &line, format!("duplicate script {rest}")));
            }
            scripts.push(Script {
                id: rest.to_string(),
                goal_concept: None,
                preconditions: Vec::new(),
                steps: Vec::new(),
                is_metascript: is_meta,
                metascript_trigger: None,
            });
            continue;
        }
        let current = scripts
            .last_mut()
            .ok_or_else(|| perr(F, &line, "entry outside a SCRIPT block"))?;
        match head {
            "GOAL" if is_concept_name(rest) => current.goal_concept = Some(rest.to_string()),
            "RESOLVES" if is_ident(rest) && current.is_metascript => {
                current.metascript_trigger = Some(rest.to_string())
            }
            "PRECONDITION" => {
                let words: Vec<&str> = rest.split_whitespace().collect();
                let ok = words.len() >= 5
                    && words[1] == "AS"
                    && words[3] == "FROM"
                    && is_ident(words[0])
                    && is_ident(words[2]);
                if !ok {
                    return Err(perr(F, &line, "expected `PRECONDITION kind AS var FROM source...`"));
                }
                let order = words[4..]
                    .iter()
                    .map(|w| Source::parse(w).ok_or_else(|| perr(F, &line, format!("unknown source `{w}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(p) = order.iter().position(|s| *s == Source::AskTeammate) {
                    if p + 1 != order.len() {
                        return Err(perr(F, &line, "ask-teammate must be the last source"));
                    }
                }
                current.preconditions.push(KnowledgeRequirement {
                    subject: words[0].to_string(),
                    var: words[2].to_string(),
                    resolution_order: order,
                });
            }
            "STEP" => {
                let (output_part, body) = match rest.find("->") {
                    Some(p) => (Some(rest[p + 2..].trim()), rest[..p].trim()),
                    None => (None, rest),
                };
                let mut words = body.split_whitespace();
                let kind = words
                    .next()
                    .and_then(StepKind::parse)
                    .ok_or_else(|| perr(F, &line, "expected step kind command|tool|speech|subplan"))?;
                let name = words
                    .next()
                    .filter(|n| is_concept_name(n))
                    .ok_or_else(|| perr(F, &line, "expected step concept"))?;
                let mut params = Vec::new();
                for w in words {
                    let (k, v) = w
                        .split_once('=')
                        .filter(|(k, v)| is_ident(k) && !v.is_empty())
                        .ok_or_else(|| perr(F, &line, format!("bad parameter `{w}`")))?;
                    params.push((k.to_string(), Arg::parse(v)));
                }
                let output = match output_part {
                    None => None,
                    Some(o) => Some(
                        o.strip_prefix('?')
                            .filter(|v| is_ident(v))
                            .ok_or_else(|| perr(F, &line, "expected `-> ?var`"))?
                            .to_string(),
                    ),
                };
                current.steps.push(Step {
                    kind,
                    name: name.to_string(),
                    params,
                    output,
                });
            }
            other => return Err(perr(F, &line, format!("unknown script entry `{other}`"))),
        }
    }
    Ok(scripts)
}

pub fn parse_service_log(src: &str) -> Result<Vec<ServiceLogEntry>, KbError> {
    const F: &str = "service-log";
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        let err = |column: usize, message: &str| KbError::Parse {
            file: F,
            line: i + 1,
            column,
            message: message.to_string(),
        };
        if fields.len() != 4 {
            return Err(err(1, "expected 4 tab-separated fields"));
        }
        if parse_date(fields[0]).is_none() {
            return Err(err(1, "bad ISO date"));
        }
        out.push(ServiceLogEntry {
            date: fields[0].to_string(),
            component: fields[1].to_string(),
            action: fields[2].to_string(),
            note: fields[3].to_string(),
        });
    }
    Ok(out)
}

fn check_scripts(concepts: &BTreeMap<String, usize>, scripts: &[Script]) -> Result<(), KbError> {
    let known = |c: &str| -> Result<(), KbError> {
        if concepts.contains_key(c) {
            Ok(())
        } else {
            Err(KbError::UnknownConcept(c.to_string()))
        }
    };
    let mut goals = BTreeSet::new();
    let mut triggers = BTreeSet::new();
    for s in scripts {
        if let Some(g) = &s.goal_concept {
            known(g)?;
            if !s.is_metascript && !goals.insert(g.clone()) {
                return Err(KbError::DuplicateGoal(g.clone()));
            }
        }
        if let Some(t) = &s.metascript_trigger {
            if !triggers.insert(t.clone()) {
                return Err(KbError::DuplicateMetascript(t.clone()));
            }
        }
        let mut bound: BTreeSet<String> = BUILTIN_VARS.iter().map(|v| v.to_string()).collect();
        bound.extend(s.preconditions.iter().map(|p| p.var.clone()));
        for step in &s.steps {
            known(&step.name)?;
            for (_, arg) in &step.params {
                if let Arg::Var(v) = arg {
                    if !bound.contains(v) {
                        return Err(KbError::Unbound {
                            script: s.id.clone(),
                            var: v.clone(),
                        });
                    }
                }
            }
            if let Some(o) = &step.output {
                bound.insert(o.clone());
            }
        }
    }
    Ok(())
}

pub fn load_knowledge(ontology: &str, scripts: &str, log: &str) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase {
        concepts: parse_ontology(ontology)?,
        scripts: parse_scripts(scripts)?,
        service_log: parse_service_log(log)?,
        index: BTreeMap::new(),
    };
    kb.reindex();
    check_scripts(&kb.index, &kb.scripts)?;
    Ok(kb)
}

/// The bundled scenario knowledge.
pub fn fixture_knowledge() -> KnowledgeBase {
    load_knowledge(
        include_str!("../fixtures/ontology.frames"),
        include_str!("../fixtures/scripts.frames"),
        include_str!("../fixtures/service_log.tsv"),
    )
    .expect("bundled knowledge fixture loads")
}

// -- rendering --------------------------------------------------------------

fn render_template(f: &FrameInstance) -> String {
    let slots: Vec<String> = f
        .slots
        .iter()
        .map(|(s, v)| format!("{s} {}", render_filler(v)))
        .collect();
    format!("{}({})", f.concept(), slots.join(", "))
}

pub fn render_ontology(concepts: &[Concept]) -> String {
    let mut out = String::new();
    for c in concepts {
        let _ = writeln!(out, "CONCEPT {}", c.name);
        if !c.parents.is_empty() {
            let _ = writeln!(out, "  IS-A {}", c.parents.join(" "));
        }
        for (s, f) in &c.slot_defs {
            let _ = writeln!(out, "  SLOT {s} {}", render_filler(f));
        }
        for (s, f) in &c.properties {
            let _ = writeln!(out, "  PROPERTY {s} {}", render_filler(f));
        }
        for l in &c.causal_links {
            let _ = write!(out, "  CAUSED-BY {} {}", l.id, render_template(&l.cause));
            if let Some((slot, concept)) = &l.applies_when {
                let _ = write!(out, " WHEN {slot} @{concept}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn render_scripts(scripts: &[Script]) -> String {
    let mut out = String::new();
    for s in scripts {
        let kw = if s.is_metascript { "METASCRIPT" } else { "SCRIPT" };
        let _ = writeln!(out, "{kw} {}", s.id);
        if let Some(g) = &s.goal_concept {
            let _ = writeln!(out, "  GOAL {g}");
        }
        if let Some(t) = &s.metascript_trigger {
            let _ = writeln!(out, "  RESOLVES {t}");
        }
        for p in &s.preconditions {
            let sources: Vec<&str> = p.resolution_order.iter().map(|s| s.name()).collect();
            let _ = writeln!(
                out,
                "  PRECONDITION {} AS {} FROM {}",
                p.subject,
                p.var,
                sources.join(" ")
            );
        }
        for step in &s.steps {
            let _ = write!(out, "  STEP {} {}", step.kind.name(), step.name);
            for (k, v) in &step.params {
                let _ = write!(out, " {k}={}", v.render());
            }
            if let Some(o) = &step.output {
                let _ = write!(out, " -> ?{o}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn render_service_log(entries: &[ServiceLogEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\t{}\n", e.date, e.component, e.action, e.note))
        .collect()
}

impl KnowledgeBase {
    /// `(ontology, scripts, log)` texts that load back to an equal base.
    pub fn render(&self) -> (String, String, String) {
        (
            render_ontology(&self.concepts),
            render_scripts(&self.scripts),
            render_service_log(&self.service_log),
        )
    }
}
