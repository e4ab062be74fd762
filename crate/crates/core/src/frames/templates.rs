//! Template mapping between scenario utterances and meaning frames.
//!
//! Each template pairs a surface pattern with typed captures (`{object}`,
//! `{label}`, `{age}`, ...) and a frame skeleton written in canonical
//! notation with the same placeholders. Understanding matches the pattern
//! and fills the skeleton; generation matches the rendered GMR against the
//! skeleton and fills the canonical sentence. Diagnostic alternatives have a
//! dedicated codec because their arity varies.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::notation::{parse_frames_with, render_frames, FrameError, ParseOptions};
use super::{Filler, FrameDocument, FrameId, FrameInstance, Provenance, ProvenanceKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("no template matches `{0}`")]
    NoMatch(String),
    #[error("ambiguous reference to {concept}: {candidates} candidates")]
    AmbiguousCoref { concept: String, candidates: usize },
    #[error("no {0} in the situation to refer to")]
    UnresolvedCoref(String),
    #[error("no generation template covers {0}")]
    Uncovered(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// What utterance understanding needs from the situation model.
pub trait ReferenceResolver {
    /// Situation instances of a concept.
    fn instances_of(&self, concept: &str) -> Vec<FrameId>;
    /// Concept of the entity currently in discourse focus, used for "it".
    fn focus_concept(&self) -> Option<String>;
}

/// A resolver with no entities; every coreference fails.
pub struct EmptyScene;

impl ReferenceResolver for EmptyScene {
    fn instances_of(&self, _concept: &str) -> Vec<FrameId> {
        Vec::new()
    }
    fn focus_concept(&self) -> Option<String> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Understand,
    Generate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CaptureType {
    Object,
    Label,
    Age,
    Months,
    Zone,
    Text,
}

impl CaptureType {
    fn from_name(name: &str) -> Self {
        match name {
            "object" => CaptureType::Object,
            "label" => CaptureType::Label,
            "age" => CaptureType::Age,
            "months" => CaptureType::Months,
            "zone" => CaptureType::Zone,
            _ => CaptureType::Text,
        }
    }

    fn surface_regex(self) -> &'static str {
        match self {
            CaptureType::Object => "[a-z]+(?:-[a-z]+)*",
            CaptureType::Label => "[a-z0-9]+(?:-[a-z0-9]+)*",
            CaptureType::Age => "new|old|used|spare|replacement",
            CaptureType::Months => "[0-9]+",
            CaptureType::Zone => "stores zone|stores|engine room|corridor",
            CaptureType::Text => ".+?",
        }
    }

    fn frame_regex(self) -> &'static str {
        match self {
            CaptureType::Object | CaptureType::Zone => "[A-Z][A-Z0-9-]*",
            CaptureType::Months => "-?[0-9]+(?:\\.[0-9]+)?",
            CaptureType::Text => "[^\"\\n]*",
            CaptureType::Label | CaptureType::Age => "\\S+",
        }
    }

    /// Surface word(s) to the notation token substituted in a skeleton.
    fn to_frame(self, surface: &str) -> String {
        let s = surface.to_lowercase();
        match self {
            CaptureType::Object => s.replace(' ', "-").to_uppercase(),
            CaptureType::Zone => match s.as_str() {
                "stores" | "stores zone" => "STORES-ZONE".into(),
                other => other.replace(' ', "-").to_uppercase(),
            },
            CaptureType::Age => match s.as_str() {
                "old" | "used" => "0.5<>1".into(),
                _ => "0.0001<>0.1".into(),
            },
            CaptureType::Label | CaptureType::Months => s,
            CaptureType::Text => surface.to_string(),
        }
    }

    /// Notation token back to its canonical surface form.
    fn to_surface(self, token: &str) -> String {
        match self {
            CaptureType::Object => token.to_lowercase(),
            CaptureType::Zone => token.to_lowercase().replace('-', " "),
            CaptureType::Age => match super::notation::parse_filler(token) {
                Ok(Filler::Range { hi, .. }) if hi <= 0.1 => "new".into(),
                Ok(Filler::Range { .. }) => "old".into(),
                _ => token.to_string(),
            },
            CaptureType::Label | CaptureType::Months | CaptureType::Text => token.to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UtteranceTemplate {
    pub name: &'static str,
    pub direction: Direction,
    /// Surface regex with `{name}` captures; matched anchored and
    /// case-insensitively.
    pub pattern: &'static str,
    /// Canonical generated wording with `{name}` placeholders.
    pub canonical: &'static str,
    /// Canonical frame notation with `{name}` placeholders.
    pub skeleton: &'static str,
}

macro_rules! human_act {
    ($head:literal, $rest:literal) => {
        concat!($head, "\n  agent #HUMAN.1\n  beneficiary #LEIA.1\n", $rest)
    };
}

macro_rules! agent_act {
    ($head:literal, $rest:literal) => {
        concat!($head, "\n  agent #LEIA.1\n  beneficiary #HUMAN.1\n", $rest)
    };
}

const UNDERSTAND_ONLY: &[UtteranceTemplate] = &[
    UtteranceTemplate {
        name: "describe-problem",
        direction: Direction::Understand,
        pattern: "(?:the |our |my )?{object} (?:is|seems to be|keeps|has been|started) overheating",
        canonical: "The {object} is overheating.",
        skeleton: human_act!(
            "#DESCRIBE-MECHANICAL-PROBLEM.1",
            "  theme #OVERHEAT.1\n#OVERHEAT.1\n  theme #{object}.1\n#{object}.1\n  corefer ->{object}\n"
        ),
    },
    UtteranceTemplate {
        name: "request-condition",
        direction: Direction::Understand,
        pattern: "the pipes? (?:look|looks|are|is|seem|seems) (?:clear|fine|ok)[.,;!]? (?:so )?(?:what about|could it be|maybe it is|check) the {object}",
        canonical: "The pipes look clear. What about the {object}?",
        skeleton: human_act!(
            "#REQUEST-INFO.1",
            "  theme #STATE-OF-REPAIR.1\n#STATE-OF-REPAIR.1\n  domain @{object}\n#MODALITY.1\n  type EPISTEMIC\n  value 0\n  scope #OBSTRUCT.1\n#OBSTRUCT.1\n  theme @PIPE\n"
        ),
    },
    UtteranceTemplate {
        name: "request-fetch",
        direction: Direction::Understand,
        pattern: "(?:please |can you |could you |would you )?(?:go and |go )?(?:fetch|get|bring|retrieve)(?: me)? (?:a|an|the|one) {age} {object}(?: from the stores)?(?: please)?",
        canonical: "Please fetch a {age} {object}.",
        skeleton: human_act!(
            "#REQUEST-ACTION-FETCH.1",
            "  theme #{object}.1\n#{object}.1\n  age {age}\n"
        ),
    },
    UtteranceTemplate {
        name: "inform-label-location",
        direction: Direction::Understand,
        pattern: "(?:it|the new one|the (?:{age} )?{object}) (?:has|carries) (?:the |a )?label {label} and (?:it )?is (?:kept |stored |located )?in the {zone}",
        canonical: "It has the label {label} and is kept in the {zone}.",
        skeleton: human_act!(
            "#INFORM.1",
            "  theme #{object}.1\n#{object}.1\n  label {label}\n  located-in @{zone}\n  corefer ->{object}\n"
        ),
    },
    UtteranceTemplate {
        name: "inform-label",
        direction: Direction::Understand,
        pattern: "(?:it|the new one|the (?:{age} )?{object}) (?:has|carries) (?:the |a )?label {label}",
        canonical: "The new {object} has the label {label}.",
        skeleton: human_act!(
            "#INFORM.1",
            "  theme #{object}.1\n#{object}.1\n  label {label}\n  corefer ->{object}\n"
        ),
    },
    UtteranceTemplate {
        name: "inform-labelled",
        direction: Direction::Understand,
        pattern: "(?:it is|it's|the (?:{age} )?{object} is) labell?ed {label}",
        canonical: "It is labeled {label}.",
        skeleton: human_act!(
            "#INFORM.1",
            "  theme #{object}.1\n#{object}.1\n  label {label}\n  corefer ->{object}\n"
        ),
    },
    UtteranceTemplate {
        name: "inform-location",
        direction: Direction::Understand,
        pattern: "(?:it is|it's|they are|they're|the (?:{age} )?{object}s? (?:is|are)) (?:kept |stored |located )?in the {zone}",
        canonical: "It is in the {zone}.",
        skeleton: human_act!(
            "#INFORM.1",
            "  theme #{object}.1\n#{object}.1\n  located-in @{zone}\n  corefer ->{object}\n"
        ),
    },
];

/// Generation templates; each also understands its own canonical wording.
const BIDIRECTIONAL: &[UtteranceTemplate] = &[
    UtteranceTemplate {
        name: "no-cause",
        direction: Direction::Generate,
        pattern: "i do not know of any possible cause for that problem",
        canonical: "I do not know of any possible cause for that problem.",
        skeleton: agent_act!("#REPORT-NO-CAUSE.1", ""),
    },
    UtteranceTemplate {
        name: "recommend-replace",
        direction: Direction::Generate,
        pattern: "according to the service log,? the {object} was installed {months} months ago and is worn(?: out)?[.,;]? it should be replaced",
        canonical: "According to the service log, the {object} was installed {months} months ago and is worn out. It should be replaced.",
        skeleton: agent_act!(
            "#RECOMMEND.1",
            "  theme #REPLACE.1\n#REPLACE.1\n  theme @{object}\n  reason #STATE-OF-REPAIR.1\n#STATE-OF-REPAIR.1\n  domain @{object}\n  range <0.7\n  age-months {months}\n"
        ),
    },
    UtteranceTemplate {
        name: "report-condition-ok",
        direction: Direction::Generate,
        pattern: "according to the service log,? the {object} was installed {months} months ago and is still within its service life",
        canonical: "According to the service log, the {object} was installed {months} months ago and is still within its service life.",
        skeleton: agent_act!(
            "#REPORT-CONDITION.1",
            "  theme #STATE-OF-REPAIR.1\n#STATE-OF-REPAIR.1\n  domain @{object}\n  range >=0.7\n  age-months {months}\n"
        ),
    },
    UtteranceTemplate {
        name: "ask-features",
        direction: Direction::Generate,
        pattern: "how (?:can|do) i identify the {age} {object}\\?? what label does it have",
        canonical: "How can I identify the {age} {object}? What label does it have?",
        skeleton: agent_act!(
            "#REQUEST-INFO.1",
            "  theme #{object}.1\n#{object}.1\n  age {age}\n  property features\n"
        ),
    },
    UtteranceTemplate {
        name: "ask-location",
        direction: Direction::Generate,
        pattern: "where is the {age} {object} kept",
        canonical: "Where is the {age} {object} kept?",
        skeleton: agent_act!(
            "#REQUEST-INFO.1",
            "  theme #{object}.1\n#{object}.1\n  age {age}\n  property location\n"
        ),
    },
    UtteranceTemplate {
        name: "acknowledge",
        direction: Direction::Generate,
        pattern: "understood[.,!]? i will (?:fetch|get|bring) the {object} labell?ed {label}",
        canonical: "Understood. I will fetch the {object} labeled {label}.",
        skeleton: agent_act!(
            "#ACKNOWLEDGE.1",
            "  theme #{object}.1\n#{object}.1\n  label {label}\n"
        ),
    },
    UtteranceTemplate {
        name: "report-delivered",
        direction: Direction::Generate,
        pattern: "here is the {age} {object}[.,!]? i have placed it on the floor next to you",
        canonical: "Here is the {age} {object}. I have placed it on the floor next to you.",
        skeleton: agent_act!(
            "#REPORT-DELIVERED.1",
            "  theme #{object}.1\n#{object}.1\n  age {age}\n"
        ),
    },
    UtteranceTemplate {
        name: "report-inability",
        direction: Direction::Generate,
        pattern: "i am unable to {reason}",
        canonical: "I am unable to {reason}.",
        skeleton: agent_act!("#REPORT-INABILITY.1", "  reason \"{reason}\"\n"),
    },
    UtteranceTemplate {
        name: "request-clarification",
        direction: Direction::Generate,
        pattern: "sorry,? i did not understand that[.!]? could you rephrase it",
        canonical: "Sorry, I did not understand that. Could you rephrase it?",
        skeleton: agent_act!("#REQUEST-CLARIFICATION.1", ""),
    },
];

/// The full template set in both directions.
pub fn fixture_templates() -> Vec<UtteranceTemplate> {
    let mut out: Vec<UtteranceTemplate> = UNDERSTAND_ONLY.to_vec();
    for t in BIDIRECTIONAL {
        out.push(t.clone());
        out.push(UtteranceTemplate {
            direction: Direction::Understand,
            ..t.clone()
        });
    }
    out
}

struct Compiled {
    template: UtteranceTemplate,
    /// surface regex; capture group names may carry a `__n` suffix
    surface: Option<Regex>,
    frame: Option<Regex>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z]+)\}").unwrap())
}

/// Replaces `{name}` placeholders with named groups, renaming repeats.
fn compile_placeholders(src: &str, escape: bool, frame_side: bool) -> String {
    let mut out = String::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut last = 0;
    for cap in placeholder_re().captures_iter(src) {
        let whole = cap.get(0).unwrap();
        let literal = &src[last..whole.start()];
        out.push_str(&if escape {
            regex::escape(literal)
        } else {
            literal.to_string()
        });
        let name = &cap[1];
        let n = seen.entry(name.to_string()).or_insert(0);
        *n += 1;
        let group = if *n == 1 {
            name.to_string()
        } else {
            format!("{name}__{n}")
        };
        let ty = CaptureType::from_name(name);
        let body = if frame_side {
            ty.frame_regex()
        } else {
            ty.surface_regex()
        };
        out.push_str(&format!("(?P<{group}>{body})"));
        last = whole.end();
    }
    let tail = &src[last..];
    out.push_str(&if escape { regex::escape(tail) } else { tail.to_string() });
    out
}

fn compiled() -> &'static [Compiled] {
    static C: OnceLock<Vec<Compiled>> = OnceLock::new();
    C.get_or_init(|| {
        fixture_templates()
            .into_iter()
            .map(|t| {
                let (surface, frame) = match t.direction {
                    Direction::Understand => {
                        let re = format!(r"(?i)^{}[\s.!?]*$", compile_placeholders(t.pattern, false, false));
                        (Some(Regex::new(&re).expect("template pattern")), None)
                    }
                    Direction::Generate => {
                        let re = format!("^{}$", compile_placeholders(t.skeleton, true, true));
                        (None, Some(Regex::new(&re).expect("template skeleton")))
                    }
                };
                Compiled {
                    template: t,
                    surface,
                    frame,
                }
            })
            .collect()
    })
}

/// Collects captures keyed by base name; repeated names must agree.
fn captures_by_name(re: &Regex, caps: &regex::Captures<'_>) -> Option<BTreeMap<String, String>> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for name in re.capture_names().flatten() {
        if let Some(m) = caps.name(name) {
            let base = name.split("__").next().unwrap().to_string();
            match out.get(&base) {
                Some(prev) if prev != m.as_str() => return None,
                _ => {
                    out.insert(base, m.as_str().to_string());
                }
            }
        }
    }
    Some(out)
}

fn normalize(utterance: &str) -> String {
    utterance.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn bare_coref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"->([A-Z][A-Z0-9-]*)(\s|$)").unwrap())
}

fn resolve_corefs(text: &str, scene: &dyn ReferenceResolver) -> Result<String, TemplateError> {
    let mut out = String::new();
    let mut last = 0;
    for cap in bare_coref_re().captures_iter(text) {
        let whole = cap.get(0).unwrap();
        let concept = &cap[1];
        let candidates = scene.instances_of(concept);
        let id = match candidates.len() {
            0 => return Err(TemplateError::UnresolvedCoref(concept.to_string())),
            1 => &candidates[0],
            n => {
                return Err(TemplateError::AmbiguousCoref {
                    concept: concept.to_string(),
                    candidates: n,
                })
            }
        };
        out.push_str(&text[last..whole.start()]);
        out.push_str(&format!("->{id}{}", &cap[2]));
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

fn fill(template: &str, values: &BTreeMap<String, String>) -> String {
    placeholder_re()
        .replace_all(template, |c: &regex::Captures<'_>| {
            values.get(&c[1]).cloned().unwrap_or_default()
        })
        .into_owned()
}

/// Maps a scenario utterance to a TMR. References to uniquely typed scene
/// entities become coreferences into the situation model.
pub fn utterance_to_tmr(
    utterance: &str,
    scene: &dyn ReferenceResolver,
    tick: u64,
) -> Result<FrameDocument, TemplateError> {
    let text = normalize(utterance);
    let provenance = Provenance {
        kind: ProvenanceKind::Tmr,
        tick,
    };
    if let Some(doc) = understand_hypotheses(&text) {
        return Ok(doc.with_provenance(provenance));
    }
    for c in compiled() {
        let Some(re) = &c.surface else { continue };
        let Some(caps) = re.captures(&text) else {
            continue;
        };
        let Some(raw) = captures_by_name(re, &caps) else {
            continue;
        };
        let mut values: BTreeMap<String, String> = raw
            .iter()
            .map(|(k, v)| (k.clone(), CaptureType::from_name(k).to_frame(v)))
            .collect();
        if c.template.skeleton.contains("{object}") && !values.contains_key("object") {
            let focus = scene
                .focus_concept()
                .ok_or_else(|| TemplateError::UnresolvedCoref("focus".into()))?;
            values.insert("object".into(), focus);
        }
        let filled = fill(c.template.skeleton, &values);
        let resolved = resolve_corefs(&filled, scene)?;
        let doc = parse_frames_with(&resolved, &ParseOptions::default())?;
        return Ok(doc.with_provenance(provenance));
    }
    Err(TemplateError::NoMatch(text))
}

/// Renders a GMR as an utterance.
pub fn gmr_to_utterance(gmr: &FrameDocument) -> Result<String, TemplateError> {
    let root = gmr
        .root()
        .ok_or_else(|| TemplateError::Uncovered("empty document".into()))?;
    if let Some(text) = generate_hypotheses(gmr) {
        return Ok(text);
    }
    let rendered = render_frames(&gmr.canonical_indices().strip_provenance());
    for c in compiled() {
        let Some(re) = &c.frame else { continue };
        let Some(caps) = re.captures(&rendered) else {
            continue;
        };
        let Some(raw) = captures_by_name(re, &caps) else {
            continue;
        };
        let values: BTreeMap<String, String> = raw
            .iter()
            .map(|(k, v)| (k.clone(), CaptureType::from_name(k).to_surface(v)))
            .collect();
        return Ok(fill(c.template.canonical, &values));
    }
    Err(TemplateError::Uncovered(root.concept().to_string()))
}

// -- diagnostic hypotheses ------------------------------------------------

/// Surface phrase for a cause frame, e.g. OBSTRUCT(theme @PIPE) → "a pipe
/// obstruction".
pub fn hypothesis_phrase(cause: &FrameInstance) -> String {
    let object = |slot: &str| {
        cause
            .get(slot)
            .and_then(Filler::as_concept)
            .map(|c| c.to_lowercase().replace('-', " "))
    };
    match cause.concept() {
        "OBSTRUCT" => format!("a {} obstruction", object("theme").unwrap_or_default()),
        "STATE-OF-REPAIR" => format!("a broken {}", object("domain").unwrap_or_default()),
        "LEAK" => format!("a {} leak", object("theme").unwrap_or_default()),
        other => {
            let head = other.to_lowercase().replace('-', " ");
            let obj = cause
                .slots
                .iter()
                .find_map(|(_, f)| f.as_concept())
                .map(|c| c.to_lowercase().replace('-', " "));
            match obj {
                Some(o) => format!("{head} of the {o}"),
                None => head,
            }
        }
    }
}

fn phrase_to_cause(phrase: &str, index: u32) -> Option<FrameInstance> {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    let [obstruct, broken, leak] = RE.get_or_init(|| {
        [
            Regex::new(r"^an? ([a-z]+(?:-[a-z]+)*) obstruction$").unwrap(),
            Regex::new(r"^an? broken ([a-z]+(?:-[a-z]+)*)$").unwrap(),
            Regex::new(r"^an? ([a-z]+(?:-[a-z]+)*) leak$").unwrap(),
        ]
    });
    let concept = |s: &str| Filler::Concept(s.to_uppercase());
    if let Some(c) = obstruct.captures(phrase) {
        return Some(FrameInstance::new(FrameId::new("OBSTRUCT", index)).with("theme", concept(&c[1])));
    }
    if let Some(c) = broken.captures(phrase) {
        return Some(
            FrameInstance::new(FrameId::new("STATE-OF-REPAIR", index))
                .with("domain", concept(&c[1]))
                .with(
                    "range",
                    Filler::Compare {
                        op: super::CmpOp::Lt,
                        value: 0.7,
                    },
                ),
        );
    }
    if let Some(c) = leak.captures(phrase) {
        return Some(FrameInstance::new(FrameId::new("LEAK", index)).with("theme", concept(&c[1])));
    }
    None
}

/// Slot names linking an ALTERNATIVE to its options, in order.
pub fn alternative_slot(i: usize) -> String {
    match i {
        0 => "domain".into(),
        1 => "range".into(),
        n => format!("range-{n}"),
    }
}

fn join_alternatives(phrases: &[String]) -> String {
    match phrases.len() {
        0 => String::new(),
        1 => phrases[0].clone(),
        2 => format!("{} or {}", phrases[0], phrases[1]),
        n => format!("{}, or {}", phrases[..n - 1].join(", "), phrases[n - 1]),
    }
}

fn generate_hypotheses(gmr: &FrameDocument) -> Option<String> {
    let root = gmr.root()?;
    match root.concept() {
        "ALTERNATIVE" => {
            let mut phrases = Vec::new();
            for i in 0.. {
                let Some(m) = root.get(&alternative_slot(i)).and_then(|f| gmr.deref(f)) else {
                    break;
                };
                let cause = m.get("scope").and_then(|f| gmr.deref(f))?;
                phrases.push(hypothesis_phrase(cause));
            }
            if phrases.is_empty() {
                return None;
            }
            Some(format!("It might be {}.", join_alternatives(&phrases)))
        }
        "MODALITY" if root.get("value").and_then(Filler::as_number) == Some(1.0) => {
            let cause = root.get("scope").and_then(|f| gmr.deref(f))?;
            Some(format!("It is {}.", hypothesis_phrase(cause)))
        }
        _ => None,
    }
}

fn understand_hypotheses(text: &str) -> Option<FrameDocument> {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    let (alt, single) = RE.get_or_init(|| {
        (
            Regex::new(r"(?i)^it might be (.+?)[.!]*$").unwrap(),
            Regex::new(r"(?i)^it is (an? .+?)[.!]*$").unwrap(),
        )
    });
    if let Some(c) = alt.captures(text) {
        let body = c[1].to_lowercase();
        let phrases: Vec<&str> = body
            .split(", or ")
            .flat_map(|p| p.split(" or "))
            .flat_map(|p| p.split(", "))
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        let causes: Vec<FrameInstance> = phrases.iter().map(|p| phrase_to_cause(p, 0)).collect::<Option<_>>()?;
        return Some(build_alternative(&causes));
    }
    if let Some(c) = single.captures(text) {
        let cause = phrase_to_cause(&c[1].to_lowercase(), 0)?;
        return Some(build_alternative(&[cause]));
    }
    None
}

/// Wraps cause frames in epistemic modalities with a uniform prior: an
/// ALTERNATIVE over k ≥ 2 options at 1/k each, or a single MODALITY at 1.0.
/// Cause frames are renumbered per concept.
pub fn build_alternative(causes: &[FrameInstance]) -> FrameDocument {
    let k = causes.len();
    let mut doc = FrameDocument::new();
    if k == 0 {
        return doc;
    }
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let causes: Vec<FrameInstance> = causes
        .iter()
        .map(|c| {
            let n = counts.entry(c.id.concept.clone()).or_insert(0);
            *n += 1;
            FrameInstance {
                id: FrameId::new(c.id.concept.clone(), *n),
                ..c.clone()
            }
        })
        .collect();
    let value = 1.0 / k as f64;
    let modality = |i: usize, cause: &FrameInstance| {
        FrameInstance::new(FrameId::new("MODALITY", i as u32 + 1))
            .with("type", Filler::Text("EPISTEMIC".into()))
            .with("value", Filler::Number(value))
            .with("scope", Filler::Instance(cause.id.clone()))
    };
    if k > 1 {
        let mut alt = FrameInstance::new(FrameId::new("ALTERNATIVE", 1));
        for i in 0..k {
            alt.set(
                alternative_slot(i),
                Filler::Instance(FrameId::new("MODALITY", i as u32 + 1)),
            );
        }
        doc.push(alt);
    }
    for (i, c) in causes.iter().enumerate() {
        doc.push(modality(i, c));
    }
    for c in causes {
        doc.push(c);
    }
    doc
}
