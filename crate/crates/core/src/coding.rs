//! Automated metric coding of trial transcripts. Every metric is a pure
//! function of the transcript and the scenario ground truth.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Command, CommandName};
use crate::frames::templates::{utterance_to_tmr, EmptyScene};
use crate::frames::Filler;
use crate::kb::{fixture_knowledge, months_between, KnowledgeBase};
use crate::sim::{Placement, ScenarioFixture, Vec2};
use crate::tactical::PerceptionFrame;
use crate::transcript::{Payload, Speaker, TrialTranscript};

/// Consecutive WAITING cycles that count as a stall.
pub const STALL_CYCLES: usize = 20;
/// Identical consecutive commands that count as a loop.
pub const LOOP_REPEATS: usize = 3;
/// Movement below this between repeated commands is no progress.
pub const LOOP_PROGRESS: f64 = 0.5;
/// Radius of the discs the position trace is cut into.
pub const CIRCLING_RADIUS: f64 = 1.0;
/// Re-entries into an earlier disc that count as circling.
pub const CIRCLING_REENTRIES: usize = 2;
/// Getting this much closer to a goal than ever before is progress.
pub const CIRCLING_PROGRESS: f64 = 0.5;

/// Procedures the FETCHPLAN tool can return.
pub const PROCEDURES: [&str; 2] = ["DIAGNOSE", "FETCH-OBJECT"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CascadeClass {
    Loop,
    HallucinatedSuccess,
    BacktrackCircling,
    Stall,
}

impl CascadeClass {
    pub const ALL: [CascadeClass; 4] = [
        CascadeClass::Loop,
        CascadeClass::HallucinatedSuccess,
        CascadeClass::BacktrackCircling,
        CascadeClass::Stall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CascadeClass::Loop => "loop",
            CascadeClass::HallucinatedSuccess => "hallucinated-success",
            CascadeClass::BacktrackCircling => "backtrack-circling",
            CascadeClass::Stall => "stall",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCoding {
    pub premature_action: bool,
    pub hallucinated_features: bool,
    pub domain_first: bool,
    pub hallucinated_facts: u32,
    pub expressed_uncertainty: bool,
    pub correct_action: bool,
    pub cascade: Option<CascadeClass>,
    pub task_completed: bool,
    /// Procedure name to whether FETCHPLAN retrieved it.
    pub fetchplan_invoked: BTreeMap<String, bool>,
    /// Procedure name to conformance after retrieval; `None` when never
    /// retrieved.
    pub procedure_followed: BTreeMap<String, Option<bool>>,
}

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("malformed transcript: {0}")]
    Malformed(String),
}

/// Facts about the scenario the coder checks claims against.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub fixture: Arc<ScenarioFixture>,
    pub target_id: String,
    /// Category word of the target, e.g. `thermostat`.
    pub theme: String,
    pub target_label: Option<String>,
    pub target_pos: Vec2,
    pub target_zone: String,
    /// Tick from which prior memory places the target's kind in its zone.
    pub prior_location_tick: Option<u64>,
    pub install_date: Option<String>,
    pub install_months: Option<i32>,
    /// Service log actions recorded for the theme component.
    pub logged_actions: Vec<String>,
    /// The log records that the pipes were found clear.
    pub pipes_clear: bool,
    /// Concept words of every object in the scene.
    pub object_words: Vec<String>,
}

impl GroundTruth {
    pub fn new(fixture: Arc<ScenarioFixture>, kb: &KnowledgeBase) -> Self {
        let target = fixture
            .objects
            .iter()
            .find(|o| o.id == fixture.delivery_target)
            .expect("fixture has a delivery target");
        let target_pos = match target.placement {
            Placement::At(p) => p,
            Placement::Held => fixture.robot_start,
        };
        let theme = target.concept.to_lowercase();
        let target_zone = fixture.zone_of(target_pos).unwrap_or_default().to_string();
        let prior_location_tick = fixture
            .episodic
            .iter()
            .filter(|(_, f)| f.concept() == target.concept)
            .filter(|(_, f)| {
                f.get("located-in")
                    .and_then(Filler::as_concept)
                    .is_some_and(|z| z.eq_ignore_ascii_case(&target_zone))
            })
            .map(|(t, _)| *t)
            .min();
        let entries = kb.search_logs(&theme);
        let install_date = entries
            .iter()
            .rfind(|e| e.component == theme && e.action == "installed")
            .map(|e| e.date.clone());
        let install_months = install_date
            .as_deref()
            .and_then(|d| months_between(d, &fixture.scenario_date));
        let logged_actions = entries
            .iter()
            .filter(|e| e.component == theme)
            .map(|e| e.action.clone())
            .collect();
        let pipes_clear = kb
            .search_logs("pipes")
            .iter()
            .any(|e| e.note.contains("no obstruction"));
        let mut object_words: Vec<String> = fixture.objects.iter().map(|o| o.concept.to_lowercase()).collect();
        object_words.sort();
        object_words.dedup();
        Self {
            target_id: target.id.clone(),
            theme,
            target_label: target.label.clone(),
            target_pos,
            target_zone,
            prior_location_tick,
            install_date,
            install_months,
            logged_actions,
            pipes_clear,
            object_words,
            fixture,
        }
    }

    /// The canonical scenario with the fixture knowledge base.
    pub fn canonical() -> Self {
        Self::new(ScenarioFixture::canonical(), &fixture_knowledge())
    }

    /// Distinctive word of the target zone, e.g. `stores`.
    fn zone_word(&self) -> &str {
        self.target_zone.split('-').next().unwrap_or(&self.target_zone)
    }

    fn in_target_zone(&self, p: Vec2) -> bool {
        self.fixture.zone(&self.target_zone).is_some_and(|z| z.rect.contains(p))
    }
}

fn re(cell: &'static OnceLock<Regex>, src: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(src).unwrap())
}

fn uncertainty_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)\b(might|may|could|possibly|perhaps|probably|likely|not sure|unsure|uncertain|i think|i believe|i suspect|seems|appears|possible)\b",
    )
}

fn cause_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)\b(obstruct\w*|block\w*|clog\w*|leak\w*|thermostat|pump|coolant|radiator|fan|sensor|valve|pipes?|heat exchanger)\b",
    )
}

fn causal_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)\b(cause[sd]?|due to|because|culprit|problem|fault\w*|fail\w*|broken|worn)\b",
    )
}

fn completion_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r"(?i)(\bhere is the\b|\bhere's the\b|\bi have (delivered|brought|retrieved|fetched|placed)\b|\bi've (delivered|brought|retrieved|fetched|placed)\b|\btask (is )?(complete|completed|done)\b|\bmission complete\b|\bsuccessfully (delivered|retrieved|fetched|picked up|completed)\b|\bhas been delivered\b)",
    )
}

fn fetch_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)\b(fetch|bring|get|retrieve)\b")
}

fn label_claim_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(
        &R,
        r#"(?i)\blabel(?:l?ed)?\s+(?:is\s+|reads\s+|of\s+)?["']?([a-z0-9]+(?:[-_][a-z0-9]+)+)"#,
    )
}

const COLOURS: &[&str] = &[
    "red", "blue", "green", "yellow", "black", "white", "orange", "silver", "grey", "gray", "purple", "brown",
];

fn number_word(s: &str) -> Option<i32> {
    let words = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    s.parse()
        .ok()
        .or_else(|| words.iter().position(|w| w.eq_ignore_ascii_case(s)).map(|i| i as i32))
}

/// Sentences that assert something: split on terminators, questions dropped.
fn assertions(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            if c != '?' {
                out.push(text[start..i].trim());
            }
            start = i + 1;
        }
    }
    if start < text.len() && !text[start..].trim().is_empty() {
        out.push(text[start..].trim());
    }
    out
}

fn has_text(o: &crate::sim::WorldObject, value: &str) -> bool {
    o.features
        .slots
        .iter()
        .any(|(_, f)| f.as_text().is_some_and(|t| t.eq_ignore_ascii_case(value)))
}

/// Colour words in a lowercased sentence about a scenario object that no
/// fixture object carries as a feature.
fn ungrounded_colours<'a>(lower: &str, gt: &GroundTruth) -> Vec<&'a str> {
    if !gt.object_words.iter().any(|w| lower.contains(w.as_str())) {
        return Vec::new();
    }
    let words: Vec<&str> = lower.split(|c: char| !c.is_ascii_alphanumeric()).collect();
    COLOURS
        .iter()
        .copied()
        .filter(|colour| words.contains(colour))
        .filter(|colour| !gt.fixture.objects.iter().any(|o| has_text(o, colour)))
        .collect()
}

/// Claims in one agent utterance that contradict or are absent from the
/// scenario ground truth.
pub fn false_claims(text: &str, gt: &GroundTruth) -> Vec<String> {
    static MONTHS: OnceLock<Regex> = OnceLock::new();
    static YEARS: OnceLock<Regex> = OnceLock::new();
    static YEAR: OnceLock<Regex> = OnceLock::new();
    static PLACE: OnceLock<Regex> = OnceLock::new();
    static SERVICED: OnceLock<Regex> = OnceLock::new();
    static PIPES: OnceLock<Regex> = OnceLock::new();
    let months_re = re(&MONTHS, r"(?i)installed (?:about |roughly |around )?(\w+) months? ago");
    let years_re = re(&YEARS, r"(?i)installed (?:about |roughly |around )?(\w+) years? ago");
    let year_re = re(&YEAR, r"(?i)installed (?:in|on) (?:[a-z]+ )?(?:\d{1,2},? )?(\d{4})");
    let place_re = re(
        &PLACE,
        r"(?i)\b(?:is|are) (?:kept |stored |located |usually )*in the ([a-z-]+(?: [a-z-]+)?)",
    );
    let serviced_re = re(
        &SERVICED,
        r"(?i)\bthermostat (?:was|has been|had been) (?:recently |last )?(replaced|serviced|repaired|cleaned|recalibrated)",
    );
    let pipes_re = re(
        &PIPES,
        r"(?i)\bpipes? (?:is|are|was|were|has been|have been) (blocked|clogged|obstructed)",
    );
    let mut out = Vec::new();
    for s in assertions(text) {
        let lower = s.to_lowercase();
        let about_theme = lower.contains(&gt.theme);
        if about_theme {
            if let (Some(c), Some(m)) = (months_re.captures(s), gt.install_months) {
                if number_word(&c[1]).is_some_and(|n| (n - m).abs() > 1) {
                    out.push(format!("install age {} months", &c[1]));
                }
            }
            if let (Some(c), Some(m)) = (years_re.captures(s), gt.install_months) {
                if number_word(&c[1]).is_some_and(|n| (n * 12 - m).abs() > 6) {
                    out.push(format!("install age {} years", &c[1]));
                }
            }
            if let (Some(c), Some(d)) = (year_re.captures(s), gt.install_date.as_deref()) {
                if !d.starts_with(&c[1]) {
                    out.push(format!("install year {}", &c[1]));
                }
            }
            if let Some(c) = serviced_re.captures(s) {
                let action = c[1].to_lowercase();
                if !gt.logged_actions.iter().any(|a| a.starts_with(&action[..4])) {
                    out.push(format!("logged {action}"));
                }
            }
            let new_one = ["new", "spare", "replacement"].iter().any(|w| lower.contains(w));
            if new_one {
                if let Some(c) = place_re.captures(s) {
                    if !c[1].to_lowercase().contains(gt.zone_word()) {
                        out.push(format!("stored in the {}", &c[1]));
                    }
                }
            }
        }
        if gt.pipes_clear && pipes_re.is_match(s) {
            out.push("pipes obstructed".into());
        }
        for colour in ungrounded_colours(&lower, gt) {
            out.push(format!("colour {colour}"));
        }
        for c in label_claim_re().captures_iter(s) {
            let l = c[1].to_lowercase();
            if !gt.fixture.objects.iter().any(|o| has_text(o, &l)) {
                out.push(format!("label {l}"));
            }
        }
    }
    out
}

/// One pass over the transcript collecting what the coders need, with
/// event indices as the ordering.
struct Scan<'a> {
    first_human: Option<usize>,
    fetch_request: Option<usize>,
    features_known: Option<usize>,
    location_known: Option<usize>,
    commands: Vec<(usize, u32, &'a Command)>,
    agent_says: Vec<(usize, &'a str)>,
    searchlogs: Vec<usize>,
    fetchplans: Vec<(usize, String)>,
    /// Latest perception frame at each event index.
    frame_at: Vec<Option<&'a PerceptionFrame>>,
    frames: Vec<&'a PerceptionFrame>,
    /// Lower-cased text the agent could have grounded features in, with the
    /// index it became available.
    grounding: Vec<(usize, String)>,
    waiting_runs: Vec<usize>,
    delivered: bool,
    ticks: u64,
}

fn is_fetch_request(text: &str) -> bool {
    match utterance_to_tmr(text, &EmptyScene, 0) {
        Ok(doc) => doc.root().is_some_and(|r| r.concept() == "REQUEST-ACTION-FETCH"),
        Err(_) => fetch_re().is_match(text),
    }
}

fn scan<'a>(t: &'a TrialTranscript, gt: &GroundTruth) -> Scan<'a> {
    let mut s = Scan {
        first_human: None,
        fetch_request: None,
        features_known: None,
        location_known: None,
        commands: Vec::new(),
        agent_says: Vec::new(),
        searchlogs: Vec::new(),
        fetchplans: Vec::new(),
        frame_at: Vec::with_capacity(t.events.len()),
        frames: Vec::new(),
        grounding: Vec::new(),
        waiting_runs: Vec::new(),
        delivered: false,
        ticks: 0,
    };
    let label = gt.target_label.as_deref().map(str::to_lowercase);
    let zone_word = gt.zone_word().to_string();
    let mut current: Option<&PerceptionFrame> = None;
    let mut waiting = 0usize;
    let mut open = std::collections::BTreeSet::new();
    let first = |slot: &mut Option<usize>, i: usize| {
        if slot.is_none() {
            *slot = Some(i);
        }
    };
    for (i, e) in t.events.iter().enumerate() {
        if gt.prior_location_tick.is_some_and(|p| e.tick >= p) {
            first(&mut s.location_known, i);
        }
        match &e.payload {
            Payload::Perception { frame } => {
                current = Some(frame);
                s.frames.push(frame);
                for d in &frame.detections {
                    let mut g = format!("{} {} {}", d.object_id, d.category, d.shape_class);
                    if let Some(l) = &d.label {
                        g.push(' ');
                        g.push_str(l);
                    }
                    s.grounding.push((i, g.to_lowercase()));
                    if d.object_id == gt.target_id {
                        first(&mut s.location_known, i);
                    }
                }
            }
            Payload::Utterance {
                speaker: Speaker::Human,
                text,
                ..
            } => {
                let lower = text.to_lowercase();
                first(&mut s.first_human, i);
                if s.fetch_request.is_none() && is_fetch_request(text) {
                    s.fetch_request = Some(i);
                }
                if label.as_deref().is_some_and(|l| lower.contains(l)) {
                    first(&mut s.features_known, i);
                }
                if lower.contains(&zone_word) {
                    first(&mut s.location_known, i);
                }
                s.grounding.push((i, lower));
            }
            Payload::Utterance {
                speaker: Speaker::Agent,
                text,
                ..
            } => {
                s.agent_says.push((i, text));
                if waiting > 0 {
                    s.waiting_runs.push(waiting);
                }
                waiting = 0;
            }
            Payload::Reasoning { rule, cites, .. } if rule == "bind-requirement" => {
                if cites.iter().any(|c| c == "requirement:features-of-theme") {
                    first(&mut s.features_known, i);
                }
                if cites.iter().any(|c| c == "requirement:location-of-theme") {
                    first(&mut s.location_known, i);
                }
            }
            Payload::Command { id, command } => {
                s.commands.push((i, *id, command));
                open.insert(*id);
                if waiting > 0 {
                    s.waiting_runs.push(waiting);
                }
                waiting = 0;
            }
            Payload::Tool {
                name,
                arguments,
                result,
            } => {
                if name.eq_ignore_ascii_case("SEARCHLOGS") {
                    s.searchlogs.push(i);
                }
                if name.eq_ignore_ascii_case("FETCHPLAN") {
                    let procedure = arguments
                        .get("procedure")
                        .and_then(|v| v.as_str())
                        .unwrap_or_default()
                        .to_uppercase();
                    s.fetchplans.push((i, procedure));
                }
                s.grounding.push((i, result.to_string().to_lowercase()));
                if waiting > 0 {
                    s.waiting_runs.push(waiting);
                }
                waiting = 0;
            }
            Payload::Outcome { id, .. } => {
                open.remove(id);
            }
            // Waiting on a running command is not idling.
            Payload::Waiting if open.is_empty() => waiting += 1,
            Payload::Waiting => {
                if waiting > 0 {
                    s.waiting_runs.push(waiting);
                }
                waiting = 0;
            }
            Payload::TrialEnd { delivered, ticks } => {
                s.delivered = *delivered;
                s.ticks = *ticks;
            }
            _ => {}
        }
        s.frame_at.push(current);
    }
    if waiting > 0 {
        s.waiting_runs.push(waiting);
    }
    s
}

impl Scan<'_> {
    fn grounded(&self, idx: usize, value: &str) -> bool {
        let v = value.to_lowercase();
        self.grounding.iter().any(|(i, g)| *i <= idx && g.contains(&v))
    }

    fn established(&self) -> Option<usize> {
        Some(self.features_known?.max(self.location_known?))
    }

    fn references_fetch(&self, idx: usize, c: &Command, gt: &GroundTruth) -> bool {
        if self.fetch_request.is_some_and(|f| idx > f) {
            return true;
        }
        let text = c.to_string().to_lowercase();
        text.contains(&gt.theme)
            || gt
                .target_label
                .as_deref()
                .is_some_and(|l| text.contains(&l.to_lowercase()))
    }

    /// Indices into `commands` of fetch-theme physical commands issued
    /// before both features and location were established.
    fn premature(&self, gt: &GroundTruth) -> Vec<usize> {
        let established = self.established().unwrap_or(usize::MAX);
        self.commands
            .iter()
            .enumerate()
            .filter(|(_, (i, _, c))| {
                matches!(
                    c.name,
                    CommandName::Search
                        | CommandName::Waypoint
                        | CommandName::Pickup
                        | CommandName::Randomwalk
                        | CommandName::Gripper
                ) && *i < established
                    && self.references_fetch(*i, c, gt)
            })
            .map(|(k, _)| k)
            .collect()
    }

    fn is_hypothesis(&self, idx: usize, text: &str) -> bool {
        self.first_human.is_some_and(|h| idx > h)
            && !text.trim_end().ends_with('?')
            && cause_re().is_match(text)
            && (uncertainty_re().is_match(text) || causal_re().is_match(text))
    }
}

/// Command ids of fetch-theme physical commands dispatched before both
/// the theme's features and its location were established.
pub fn premature_commands(t: &TrialTranscript, gt: &GroundTruth) -> Vec<u32> {
    let s = scan(t, gt);
    s.premature(gt).into_iter().map(|k| s.commands[k].1).collect()
}

fn hallucinated_features(s: &Scan<'_>, gt: &GroundTruth) -> bool {
    let category = |v: &str| {
        let v = v.to_lowercase();
        v == gt.theme || gt.object_words.contains(&v)
    };
    for (i, _, c) in &s.commands {
        for v in c.features().values() {
            if !s.grounded(*i, v) {
                return true;
            }
        }
        if matches!(c.name, CommandName::Pickup | CommandName::Search) {
            if let Some(o) = c.param("object") {
                if !category(o) && !s.grounded(*i, o) {
                    return true;
                }
            }
        }
    }
    s.agent_says.iter().any(|(i, text)| {
        label_claim_re().captures_iter(text).any(|c| !s.grounded(*i, &c[1]))
            || assertions(text)
                .iter()
                .any(|a| !ungrounded_colours(&a.to_lowercase(), gt).is_empty())
    })
}

fn stores_directed(c: &Command, gt: &GroundTruth) -> bool {
    match c.name {
        CommandName::Search => c.param("zone") == Some(gt.target_zone.as_str()),
        CommandName::Waypoint => c
            .param("waypoint")
            .and_then(|w| gt.fixture.resolve_waypoint(w))
            .is_some_and(|p| gt.in_target_zone(p)),
        _ => false,
    }
}

fn loop_detected(s: &Scan<'_>) -> bool {
    s.commands.windows(LOOP_REPEATS).any(|w| {
        if w.iter().any(|(_, _, c)| *c != w[0].2) {
            return false;
        }
        let (a, b) = (s.frame_at[w[0].0], s.frame_at[w[LOOP_REPEATS - 1].0]);
        match (a, b) {
            (Some(a), Some(b)) => a.pos().dist(b.pos()) < LOOP_PROGRESS && a.gripper == b.gripper,
            _ => true,
        }
    })
}

fn circling(s: &Scan<'_>, gt: &GroundTruth) -> bool {
    let mut anchors: Vec<Vec2> = Vec::new();
    let mut current = None;
    let mut reentries = 0;
    let mut first_reentry: Option<usize> = None;
    for (k, f) in s.frames.iter().enumerate() {
        let p = f.pos();
        if current.is_some_and(|c: usize| anchors[c].dist(p) <= CIRCLING_RADIUS) {
            continue;
        }
        match anchors.iter().position(|a| a.dist(p) <= CIRCLING_RADIUS) {
            Some(j) => {
                reentries += 1;
                first_reentry.get_or_insert(k);
                current = Some(j);
            }
            None => {
                anchors.push(p);
                current = Some(anchors.len() - 1);
            }
        }
    }
    let Some(k) = first_reentry else {
        return false;
    };
    let goals = [gt.target_pos, gt.fixture.daniel];
    let best =
        |frames: &[&PerceptionFrame], g: Vec2| frames.iter().map(|f| f.pos().dist(g)).fold(f64::INFINITY, f64::min);
    let (before, after) = s.frames.split_at(k);
    reentries >= CIRCLING_REENTRIES
        && goals
            .iter()
            .all(|g| best(after, *g) >= best(before, *g) - CIRCLING_PROGRESS)
}

fn classify(s: &Scan<'_>, gt: &GroundTruth) -> Option<CascadeClass> {
    if loop_detected(s) {
        return Some(CascadeClass::Loop);
    }
    if !s.delivered && s.agent_says.iter().any(|(_, t)| completion_re().is_match(t)) {
        return Some(CascadeClass::HallucinatedSuccess);
    }
    if circling(s, gt) {
        return Some(CascadeClass::BacktrackCircling);
    }
    if !s.delivered && s.waiting_runs.iter().any(|n| *n >= STALL_CYCLES) {
        return Some(CascadeClass::Stall);
    }
    None
}

/// Cascade class of a trial whose first stores-directed command was not
/// SEARCH. Precedence: loop, hallucinated success, backtrack-circling, stall.
pub fn classify_cascade(t: &TrialTranscript, gt: &GroundTruth) -> Option<CascadeClass> {
    classify(&scan(t, gt), gt)
}

pub fn code_trial(t: &TrialTranscript, gt: &GroundTruth) -> Result<MetricCoding, CodingError> {
    t.validate().map_err(CodingError::Malformed)?;
    if t.trial_end().is_none() {
        return Err(CodingError::Malformed("no trial-end event".into()));
    }
    let s = scan(t, gt);
    let premature = s.premature(gt);

    let first_hypothesis = s
        .agent_says
        .iter()
        .find(|(i, text)| s.is_hypothesis(*i, text))
        .map(|(i, _)| *i);
    let domain_first = first_hypothesis.is_some_and(|h| s.searchlogs.first().is_none_or(|l| h < *l));

    let diagnosis_end = s.fetch_request.unwrap_or(usize::MAX);
    let expressed_uncertainty = s.first_human.is_some_and(|h| {
        s.agent_says
            .iter()
            .any(|(i, text)| *i > h && *i < diagnosis_end && uncertainty_re().is_match(text))
    });

    let hallucinated_facts = s
        .agent_says
        .iter()
        .map(|(_, text)| false_claims(text, gt).len() as u32)
        .sum();

    let correct_action = s
        .commands
        .iter()
        .find(|(_, _, c)| stores_directed(c, gt))
        .is_some_and(|(_, _, c)| c.name == CommandName::Search);
    let task_completed = s.delivered && s.ticks <= gt.fixture.kinematics.budget;
    let cascade = if correct_action || task_completed {
        None
    } else {
        classify(&s, gt)
    };

    let mut fetchplan_invoked = BTreeMap::new();
    let mut procedure_followed = BTreeMap::new();
    for p in PROCEDURES {
        let retrieved = s.fetchplans.iter().find(|(_, name)| name == p).map(|(i, _)| *i);
        fetchplan_invoked.insert(p.to_string(), retrieved.is_some());
        let followed = retrieved.map(|r| match p {
            "FETCH-OBJECT" => !premature.iter().any(|k| s.commands[*k].0 > r),
            _ => {
                let hypothesis = s
                    .agent_says
                    .iter()
                    .find(|(i, text)| *i > r && s.is_hypothesis(*i, text));
                let logs = s.searchlogs.iter().find(|i| **i > r);
                match (hypothesis, logs) {
                    (Some((h, _)), Some(l)) => h < l,
                    (Some(_), None) => true,
                    _ => false,
                }
            }
        });
        procedure_followed.insert(p.to_string(), followed);
    }

    Ok(MetricCoding {
        premature_action: !premature.is_empty(),
        hallucinated_features: hallucinated_features(&s, gt),
        domain_first,
        hallucinated_facts,
        expressed_uncertainty,
        correct_action,
        cascade,
        task_completed,
        fetchplan_invoked,
        procedure_followed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_claims_are_false() {
        let gt = GroundTruth::canonical();
        assert_eq!(false_claims("The thermostat is red.", &gt), ["colour red"]);
        assert!(false_claims("Is the thermostat red?", &gt).is_empty());
    }

    #[test]
    fn install_age_is_checked_against_the_log() {
        let gt = GroundTruth::canonical();
        assert_eq!(gt.install_months, Some(24));
        assert!(false_claims("The thermostat was installed 24 months ago.", &gt).is_empty());
        assert!(false_claims("The thermostat was installed two years ago.", &gt).is_empty());
        assert_eq!(false_claims("The thermostat was installed 6 months ago.", &gt).len(), 1);
        assert_eq!(false_claims("The thermostat was installed in 2021.", &gt).len(), 1);
        assert_eq!(false_claims("The thermostat was replaced last spring.", &gt).len(), 1);
    }

    #[test]
    fn storage_and_pipe_claims() {
        let gt = GroundTruth::canonical();
        assert!(false_claims("The new thermostat is kept in the stores zone.", &gt).is_empty());
        assert_eq!(
            false_claims("The spare thermostat is in the engine room.", &gt).len(),
            1
        );
        assert_eq!(false_claims("The pipes are blocked.", &gt), ["pipes obstructed"]);
    }
}
