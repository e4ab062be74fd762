//! Meaning frames: the shared data model for text, vision and generated
//! meaning representations and for the agent's situation model.
//!
//! A [`FrameDocument`] is an ordered list of [`FrameInstance`]s written in a
//! compact notation:
//!
//! ```text
//! #DESCRIBE-MECHANICAL-PROBLEM.1
//!   agent #HUMAN.1
//!   theme #OVERHEAT.1
//! #OVERHEAT.1
//!   theme @ENGINE
//! ```
//!
//! See [`notation`] for the grammar and [`templates`] for the mapping between
//! scenario utterances and frames.

pub mod notation;
pub mod templates;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use notation::{parse_frames, parse_frames_with, render_filler, render_frames, FrameError, ParseOptions};

/// `#CONCEPT.n`: a concept name plus a per-concept instance index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId {
    pub concept: String,
    pub index: u32,
}

impl FrameId {
    pub fn new(concept: impl Into<String>, index: u32) -> Self {
        Self {
            concept: concept.into(),
            index,
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.concept, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

/// Slot filler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Filler {
    /// `#X.n`, a frame in the same document.
    Instance(FrameId),
    /// `->X.n`, a pointer into the situation model.
    CoRef(FrameId),
    /// `@PIPE`, an uninstantiated ontological concept.
    Concept(String),
    /// `lo<>hi`
    Range {
        lo: f64,
        hi: f64,
    },
    /// `<0.7`
    Compare {
        op: CmpOp,
        value: f64,
    },
    Number(f64),
    Text(String),
    /// `*take-this-action "..."`; only valid on directive lines.
    Directive(String),
}

impl Filler {
    pub fn as_concept(&self) -> Option<&str> {
        match self {
            Filler::Concept(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_instance(&self) -> Option<&FrameId> {
        match self {
            Filler::Instance(id) => Some(id),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Filler::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Filler::Text(t) => Some(t),
            _ => None,
        }
    }

    /// Whether a concrete value satisfies this filler read as a constraint.
    pub fn admits_number(&self, x: f64) -> bool {
        match self {
            Filler::Range { lo, hi } => *lo <= x && x <= *hi,
            Filler::Compare { op, value } => op.holds(x, *value),
            Filler::Number(n) => *n == x,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProvenanceKind {
    Tmr,
    Vmr,
    Gmr,
    Situation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub tick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameInstance {
    pub id: FrameId,
    /// Ordered slot map; insertion order is the rendering order.
    pub slots: Vec<(String, Filler)>,
    /// Label of the enclosing group (e.g. `Plan.1`), if any.
    pub group: Option<String>,
    pub provenance: Option<Provenance>,
}

impl FrameInstance {
    pub fn new(id: FrameId) -> Self {
        Self {
            id,
            slots: Vec::new(),
            group: None,
            provenance: None,
        }
    }

    pub fn concept(&self) -> &str {
        &self.id.concept
    }

    pub fn with(mut self, slot: impl Into<String>, filler: Filler) -> Self {
        self.set(slot, filler);
        self
    }

    pub fn get(&self, slot: &str) -> Option<&Filler> {
        self.slots.iter().find(|(s, _)| s == slot).map(|(_, f)| f)
    }

    /// Sets a slot, replacing an existing filler in place.
    pub fn set(&mut self, slot: impl Into<String>, filler: Filler) {
        let slot = slot.into();
        match self.slots.iter_mut().find(|(s, _)| *s == slot) {
            Some(entry) => entry.1 = filler,
            None => self.slots.push((slot, filler)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameDocument {
    pub frames: Vec<FrameInstance>,
}

impl FrameDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn root(&self) -> Option<&FrameInstance> {
        self.frames.first()
    }

    pub fn get(&self, id: &FrameId) -> Option<&FrameInstance> {
        self.frames.iter().find(|f| &f.id == id)
    }

    pub fn get_mut(&mut self, id: &FrameId) -> Option<&mut FrameInstance> {
        self.frames.iter_mut().find(|f| &f.id == id)
    }

    pub fn first_of(&self, concept: &str) -> Option<&FrameInstance> {
        self.frames.iter().find(|f| f.id.concept == concept)
    }

    /// Resolves an `Instance` filler to its frame.
    pub fn deref(&self, filler: &Filler) -> Option<&FrameInstance> {
        filler.as_instance().and_then(|id| self.get(id))
    }

    /// Next free instance index for a concept.
    pub fn next_index(&self, concept: &str) -> u32 {
        self.frames
            .iter()
            .filter(|f| f.id.concept == concept)
            .map(|f| f.id.index)
            .max()
            .unwrap_or(0)
            + 1
    }

    pub fn push(&mut self, frame: FrameInstance) {
        self.frames.push(frame);
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        for f in &mut self.frames {
            f.provenance = Some(provenance);
        }
        self
    }

    pub fn strip_provenance(mut self) -> Self {
        for f in &mut self.frames {
            f.provenance = None;
        }
        self
    }

    /// Renumbers instance indices per concept in order of first appearance,
    /// rewriting every `Instance` filler. Two documents that differ only in
    /// index choice become equal.
    pub fn canonical_indices(&self) -> FrameDocument {
        let mut next: BTreeMap<String, u32> = BTreeMap::new();
        let mut map: BTreeMap<FrameId, FrameId> = BTreeMap::new();
        for f in &self.frames {
            let n = next.entry(f.id.concept.clone()).or_insert(0);
            *n += 1;
            map.insert(f.id.clone(), FrameId::new(f.id.concept.clone(), *n));
        }
        let frames = self
            .frames
            .iter()
            .map(|f| FrameInstance {
                id: map[&f.id].clone(),
                slots: f
                    .slots
                    .iter()
                    .map(|(s, v)| {
                        let v = match v {
                            Filler::Instance(id) => {
                                Filler::Instance(map.get(id).cloned().unwrap_or_else(|| id.clone()))
                            }
                            other => other.clone(),
                        };
                        (s.clone(), v)
                    })
                    .collect(),
                group: f.group.clone(),
                provenance: f.provenance,
            })
            .collect();
        FrameDocument { frames }
    }

    /// Concept-and-slot-name skeleton, ignoring filler values and provenance.
    pub fn skeleton(&self) -> Vec<(String, Vec<String>)> {
        self.frames
            .iter()
            .map(|f| (f.id.concept.clone(), f.slots.iter().map(|(s, _)| s.clone()).collect()))
            .collect()
    }
}

impl fmt::Display for FrameDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_frames(self))
    }
}
