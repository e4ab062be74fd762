//! Tactical layer: a blackboard, a small behavior tree and the skill
//! library. Commands from the strategic layer are decoded onto the
//! blackboard; perception is encoded from the world every tick; the tree
//! runs the safety check and then the active skill.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Command, CommandName, Features};
use crate::frames::{Filler, FrameDocument, FrameId, FrameInstance, Provenance, ProvenanceKind};
use crate::sim::{Actuation, Placement, Vec2, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: String,
    /// Perceived object category, e.g. `thermostat`.
    pub category: String,
    pub shape_class: String,
    /// Fiducial label; only read within label range.
    pub label: Option<String>,
    /// Offset from the robot in world axes.
    pub rel: Vec2,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionFrame {
    pub tick: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub zone: Option<String>,
    pub detections: Vec<Detection>,
    pub collision: bool,
    pub gripper: Option<String>,
}

impl PerceptionFrame {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// One-line rendering used in prompts and the REPL.
    pub fn render(&self) -> String {
        let mut s = format!(
            "t={} pos=({:.2},{:.2}) heading={:.0}deg speed={:.2} zone={} collision={} gripper={}",
            self.tick,
            self.x,
            self.y,
            self.heading.to_degrees(),
            self.speed,
            self.zone.as_deref().unwrap_or("none"),
            self.collision,
            self.gripper.as_deref().unwrap_or("empty"),
        );
        if self.detections.is_empty() {
            s.push_str(" detections=none");
        }
        for d in &self.detections {
            s.push_str(&format!(
                " [{} {} d={:.2}{}]",
                d.object_id,
                d.category,
                d.distance,
                d.label.as_deref().map(|l| format!(" label={l}")).unwrap_or_default()
            ));
        }
        s
    }
}

/// Deterministic sensor model: omnidirectional, range-limited; labels are
/// legible only within label range.
pub fn encode_frame(world: &World, tick: u64) -> PerceptionFrame {
    let k = world.kin();
    let robot = world.robot.pos;
    let mut detections: Vec<Detection> = world
        .objects
        .iter()
        .filter_map(|o| {
            let Placement::At(p) = o.placement else { return None };
            let distance = p.dist(robot);
            (distance <= k.detection_range).then(|| Detection {
                object_id: o.id.clone(),
                category: o.concept.to_lowercase(),
                shape_class: o.shape_class.clone(),
                label: if distance <= k.label_range {
                    o.label.clone()
                } else {
                    None
                },
                rel: p - robot,
                distance,
            })
        })
        .collect();
    detections.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    PerceptionFrame {
        tick,
        x: robot.x,
        y: robot.y,
        heading: world.robot.heading,
        speed: world.robot.speed,
        zone: world.fixture.zone_of(robot).map(str::to_string),
        detections,
        collision: world.collision,
        gripper: world.robot.gripper.clone(),
    }
}

/// Vision meaning representation for one detection.
pub fn detection_vmr(d: &Detection, tick: u64) -> FrameDocument {
    let mut f = FrameInstance::new(FrameId::new(d.category.to_uppercase(), 1))
        .with("object-id", Filler::Text(d.object_id.clone()))
        .with("shape-class", Filler::Text(d.shape_class.clone()));
    if let Some(l) = &d.label {
        f.set("label", Filler::Text(l.clone()));
    }
    FrameDocument { frames: vec![f] }.with_provenance(Provenance {
        kind: ProvenanceKind::Vmr,
        tick,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillKind {
    Idle,
    Search,
    Waypoint,
    Pickup,
    Drop,
    Gripper,
    Randomwalk,
}

impl fmt::Display for SkillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SkillKind::Idle => "idle",
            SkillKind::Search => "search",
            SkillKind::Waypoint => "waypoint",
            SkillKind::Pickup => "pickup",
            SkillKind::Drop => "drop",
            SkillKind::Gripper => "gripper",
            SkillKind::Randomwalk => "randomwalk",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillState {
    Idle,
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StatusDetail {
    /// Search halted at a candidate and awaits a grounding verdict.
    Candidate {
        object_id: String,
        vmr: String,
    },
    Failure {
        reason: String,
    },
    Note {
        text: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillStatus {
    pub skill: SkillKind,
    pub state: SkillState,
    pub detail: Option<StatusDetail>,
}

impl SkillStatus {
    pub fn idle() -> Self {
        Self {
            skill: SkillKind::Idle,
            state: SkillState::Idle,
            detail: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Encoder,
    Decoder,
    Skill,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub value: T,
    pub tick: u64,
}

/// Flags set by the decoder alongside the active skill.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecFlags {
    pub gripper_open: Option<bool>,
    pub halt: bool,
}

/// Tick-stamped store. Perception keys are written by the encoder, command
/// keys by the decoder, outcome keys by skills.
#[derive(Clone, Debug)]
pub struct Blackboard {
    pub perception: Entry<Option<PerceptionFrame>>,
    pub active_skill: Entry<SkillKind>,
    pub skill_params: Entry<Option<Command>>,
    pub flags: Entry<ExecFlags>,
    pub skill_status: Entry<SkillStatus>,
    writes: Vec<(u64, &'static str, Role)>,
}

impl Default for Blackboard {
    fn default() -> Self {
        Self {
            perception: Entry { value: None, tick: 0 },
            active_skill: Entry {
                value: SkillKind::Idle,
                tick: 0,
            },
            skill_params: Entry { value: None, tick: 0 },
            flags: Entry {
                value: ExecFlags::default(),
                tick: 0,
            },
            skill_status: Entry {
                value: SkillStatus::idle(),
                tick: 0,
            },
            writes: Vec::new(),
        }
    }
}

impl Blackboard {
    pub fn write_perception(&mut self, frame: PerceptionFrame, tick: u64) {
        self.perception = Entry {
            value: Some(frame),
            tick,
        };
        self.writes.push((tick, "perception", Role::Encoder));
    }

    fn write_command(&mut self, skill: SkillKind, cmd: Option<Command>, flags: ExecFlags, tick: u64) {
        self.active_skill = Entry { value: skill, tick };
        self.skill_params = Entry { value: cmd, tick };
        self.flags = Entry { value: flags, tick };
        self.writes.push((tick, "active-skill", Role::Decoder));
        self.writes.push((tick, "skill-params", Role::Decoder));
        self.writes.push((tick, "execution-flags", Role::Decoder));
    }

    fn write_status(&mut self, status: SkillStatus, tick: u64) {
        self.skill_status = Entry { value: status, tick };
        self.writes.push((tick, "skill-status", Role::Skill));
    }

    /// `(tick, key, writer)` for every write so far.
    pub fn write_log(&self) -> &[(u64, &'static str, Role)] {
        &self.writes
    }

    pub fn collision(&self) -> bool {
        self.perception.value.as_ref().is_some_and(|p| p.collision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Success,
    Failure,
    Running,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leaf {
    Halt,
    RunSkill,
    Idle,
}

#[derive(Clone, Debug)]
pub enum BehaviorNode {
    Sequence(Vec<BehaviorNode>),
    Selector(Vec<BehaviorNode>),
    Condition(&'static str, fn(&Blackboard) -> bool),
    Action(Leaf),
    Inverter(Box<BehaviorNode>),
    /// Re-ticks the child up to `n` extra times within one tick on failure.
    Retry(u32, Box<BehaviorNode>),
}

/// Safety first, then the active skill, then zero motion.
pub fn default_tree() -> BehaviorNode {
    use BehaviorNode::*;
    Selector(vec![
        Sequence(vec![Condition("collision", Blackboard::collision), Action(Leaf::Halt)]),
        Sequence(vec![
            Condition("skill-active", |bb| bb.active_skill.value != SkillKind::Idle),
            Action(Leaf::RunSkill),
        ]),
        Action(Leaf::Idle),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grounding {
    /// Search stops at each candidate and waits for a verdict from above.
    Strategic,
    /// Search checks the features parameter itself; without one the first
    /// candidate is accepted.
    Local,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("unresolvable waypoint {0}")]
    UnknownWaypoint(String),
}

#[derive(Clone, Debug)]
struct SearchState {
    object: String,
    features: Features,
    path: Vec<Vec2>,
    idx: usize,
    zone: String,
    rejected: BTreeSet<String>,
    candidate: Option<String>,
    awaiting: bool,
    verdict: Option<bool>,
}

#[derive(Clone, Debug)]
struct RandomWalkState {
    remaining: u32,
    heading: Option<f64>,
}

#[derive(Clone, Debug)]
enum Skill {
    Search(SearchState),
    Waypoint { path: Vec<Vec2>, idx: usize },
    Pickup { object: String },
    Drop { location: String },
    Gripper { open: bool },
    RandomWalk(RandomWalkState),
}

#[derive(Clone, Debug)]
pub struct Controller {
    pub tree: BehaviorNode,
    pub bb: Blackboard,
    pub grounding: Grounding,
    skill: Option<Skill>,
    /// Object accepted by the last successful search.
    pub target: Option<String>,
}

impl Controller {
    pub fn new(grounding: Grounding) -> Self {
        Self {
            tree: default_tree(),
            bb: Blackboard::default(),
            grounding,
            skill: None,
            target: None,
        }
    }

    pub fn status(&self) -> &SkillStatus {
        &self.bb.skill_status.value
    }

    pub fn active(&self) -> SkillKind {
        self.bb.active_skill.value
    }

    /// Encodes the current world and stores the frame.
    pub fn perceive(&mut self, world: &World, tick: u64) -> PerceptionFrame {
        let frame = encode_frame(world, tick);
        self.bb.write_perception(frame.clone(), tick);
        frame
    }

    /// Installs a command, preempting whatever ran before.
    pub fn decode_command(&mut self, cmd: &Command, world: &World, tick: u64) -> Result<(), DecodeError> {
        let fixture = &world.fixture;
        let from = world.robot.pos;
        let (skill, kind, flags) = match cmd.name {
            CommandName::Search => {
                let zone_name = cmd.param("zone").unwrap_or_default();
                let zone = fixture
                    .zone(zone_name)
                    .ok_or_else(|| DecodeError::UnknownZone(zone_name.to_string()))?;
                let mut path = Vec::new();
                if let Some(first) = zone.sweep.first() {
                    path = fixture.route(from, *first);
                    path.extend(zone.sweep.iter().skip(1).copied());
                }
                let state = SearchState {
                    object: cmd.param("object").unwrap_or_default().to_string(),
                    features: cmd.features(),
                    path,
                    idx: 0,
                    zone: zone.name.clone(),
                    rejected: BTreeSet::new(),
                    candidate: None,
                    awaiting: false,
                    verdict: None,
                };
                (Some(Skill::Search(state)), SkillKind::Search, ExecFlags::default())
            }
            CommandName::Waypoint => {
                let id = cmd.param("waypoint").unwrap_or_default();
                let goal = fixture
                    .resolve_waypoint(id)
                    .ok_or_else(|| DecodeError::UnknownWaypoint(id.to_string()))?;
                let path = fixture.route(from, goal);
                (
                    Some(Skill::Waypoint { path, idx: 0 }),
                    SkillKind::Waypoint,
                    ExecFlags::default(),
                )
            }
            CommandName::Pickup => (
                Some(Skill::Pickup {
                    object: cmd.param("object").unwrap_or_default().to_string(),
                }),
                SkillKind::Pickup,
                ExecFlags::default(),
            ),
            CommandName::Dropobject => (
                Some(Skill::Drop {
                    location: cmd.param("location").unwrap_or_default().to_string(),
                }),
                SkillKind::Drop,
                ExecFlags::default(),
            ),
            CommandName::Gripper => {
                let open = cmd.param("state") == Some("open");
                (
                    Some(Skill::Gripper { open }),
                    SkillKind::Gripper,
                    ExecFlags {
                        gripper_open: Some(open),
                        halt: false,
                    },
                )
            }
            CommandName::Stop => (
                None,
                SkillKind::Idle,
                ExecFlags {
                    gripper_open: None,
                    halt: true,
                },
            ),
            CommandName::Randomwalk => {
                let remaining = cmd.param("ticks").and_then(|t| t.parse().ok()).unwrap_or(20);
                (
                    Some(Skill::RandomWalk(RandomWalkState {
                        remaining,
                        heading: None,
                    })),
                    SkillKind::Randomwalk,
                    ExecFlags::default(),
                )
            }
        };
        self.skill = skill;
        self.bb.write_command(kind, Some(cmd.clone()), flags, tick);
        let status = if kind == SkillKind::Idle {
            SkillStatus {
                skill: SkillKind::Idle,
                state: SkillState::Succeeded,
                detail: Some(StatusDetail::Note { text: "stopped".into() }),
            }
        } else {
            SkillStatus {
                skill: kind,
                state: SkillState::Running,
                detail: None,
            }
        };
        self.bb.write_status(status, tick);
        Ok(())
    }

    /// Grounding verdict for a pending search candidate.
    pub fn deliver_verdict(&mut self, matched: bool) {
        if let Some(Skill::Search(s)) = &mut self.skill {
            if s.awaiting {
                s.verdict = Some(matched);
            }
        }
    }

    /// One control cycle. The world is mutable only for its random stream.
    pub fn tick(&mut self, world: &mut World, tick: u64) -> (Actuation, SkillStatus) {
        let mut act = Actuation {
            max_step: world.kin().speed,
            ..Default::default()
        };
        let tree = self.tree.clone();
        self.tick_node(&tree, world, tick, &mut act);
        if let Some(open) = self.bb.flags.value.gripper_open.take() {
            act.gripper_open = Some(open);
        }
        (act, self.status().clone())
    }

    fn tick_node(&mut self, node: &BehaviorNode, world: &mut World, tick: u64, act: &mut Actuation) -> NodeStatus {
        match node {
            BehaviorNode::Sequence(children) => {
                for c in children {
                    match self.tick_node(c, world, tick, act) {
                        NodeStatus::Success => continue,
                        other => return other,
                    }
                }
                NodeStatus::Success
            }
            BehaviorNode::Selector(children) => {
                for c in children {
                    match self.tick_node(c, world, tick, act) {
                        NodeStatus::Failure => continue,
                        other => return other,
                    }
                }
                NodeStatus::Failure
            }
            BehaviorNode::Condition(_, pred) => {
                if pred(&self.bb) {
                    NodeStatus::Success
                } else {
                    NodeStatus::Failure
                }
            }
            BehaviorNode::Inverter(child) => match self.tick_node(child, world, tick, act) {
                NodeStatus::Success => NodeStatus::Failure,
                NodeStatus::Failure => NodeStatus::Success,
                NodeStatus::Running => NodeStatus::Running,
            },
            BehaviorNode::Retry(n, child) => {
                let mut status = self.tick_node(child, world, tick, act);
                for _ in 0..*n {
                    if status != NodeStatus::Failure {
                        break;
                    }
                    status = self.tick_node(child, world, tick, act);
                }
                status
            }
            BehaviorNode::Action(Leaf::Halt) | BehaviorNode::Action(Leaf::Idle) => {
                act.target = None;
                NodeStatus::Success
            }
            BehaviorNode::Action(Leaf::RunSkill) => self.run_skill(world, tick, act),
        }
    }

    fn finish(&mut self, tick: u64, state: SkillState, detail: Option<StatusDetail>) -> NodeStatus {
        let skill = self.active();
        self.bb.write_status(SkillStatus { skill, state, detail }, tick);
        self.skill = None;
        self.bb.active_skill = Entry {
            value: SkillKind::Idle,
            tick,
        };
        if state == SkillState::Succeeded {
            NodeStatus::Success
        } else {
            NodeStatus::Failure
        }
    }

    fn running(&mut self, tick: u64, detail: Option<StatusDetail>) -> NodeStatus {
        let skill = self.active();
        let status = SkillStatus {
            skill,
            state: SkillState::Running,
            detail,
        };
        if self.bb.skill_status.value != status {
            self.bb.write_status(status, tick);
        }
        NodeStatus::Running
    }

    fn fail(&mut self, tick: u64, reason: impl Into<String>) -> NodeStatus {
        self.finish(
            tick,
            SkillState::Failed,
            Some(StatusDetail::Failure { reason: reason.into() }),
        )
    }

    fn run_skill(&mut self, world: &mut World, tick: u64, act: &mut Actuation) -> NodeStatus {
        let Some(skill) = self.skill.take() else {
            return NodeStatus::Failure;
        };
        let frame = self.bb.perception.value.clone();
        let robot = world.robot.pos;
        let k = world.kin().clone();
        match skill {
            Skill::Waypoint { path, mut idx } => {
                while idx < path.len() && path[idx].dist(robot) <= k.arrive_tolerance {
                    idx += 1;
                }
                if idx >= path.len() {
                    return self.finish(tick, SkillState::Succeeded, None);
                }
                act.target = Some(path[idx]);
                self.skill = Some(Skill::Waypoint { path, idx });
                self.running(tick, None)
            }
            Skill::Search(mut s) => self.run_search(&mut s, world, frame.as_ref(), tick, act, &k),
            Skill::Pickup { object } => {
                if world.robot.gripper.is_some() {
                    return self.fail(tick, "gripper occupied");
                }
                let frame = frame.unwrap_or_else(|| encode_frame(world, tick));
                let within: Vec<&Detection> = frame
                    .detections
                    .iter()
                    .filter(|d| d.distance <= k.grasp_radius)
                    .collect();
                // by id, by label, the last search result, then any of the category
                let target = self.target.as_deref();
                let pick = within
                    .iter()
                    .find(|d| d.object_id == object)
                    .or_else(|| within.iter().find(|d| d.label.as_deref() == Some(object.as_str())))
                    .or_else(|| {
                        within
                            .iter()
                            .find(|d| Some(d.object_id.as_str()) == target && d.category == object)
                    })
                    .or_else(|| within.iter().find(|d| d.category == object));
                match pick {
                    Some(d) => {
                        act.pickup = Some(d.object_id.clone());
                        let text = format!("holding {}", d.object_id);
                        self.finish(tick, SkillState::Succeeded, Some(StatusDetail::Note { text }))
                    }
                    None => self.fail(tick, format!("no {object} within grasp radius")),
                }
            }
            Skill::Drop { location } => {
                if world.robot.gripper.is_none() {
                    return self.fail(tick, "gripper empty");
                }
                if location != "floor" {
                    return self.fail(tick, format!("unknown drop location {location}"));
                }
                let h = world.robot.heading;
                act.drop_at = Some(robot + Vec2::new(h.cos(), h.sin()).scale(0.3));
                self.finish(tick, SkillState::Succeeded, None)
            }
            Skill::Gripper { open } => {
                act.gripper_open = Some(open);
                if open && world.robot.gripper.is_some() {
                    act.drop_at = Some(robot);
                }
                self.finish(tick, SkillState::Succeeded, None)
            }
            Skill::RandomWalk(mut r) => {
                if r.remaining == 0 {
                    return self.finish(tick, SkillState::Succeeded, None);
                }
                if r.heading.is_none() || world.collision {
                    r.heading = Some(world.random_unit() * std::f64::consts::TAU);
                }
                let h = r.heading.unwrap();
                act.target = Some(robot + Vec2::new(h.cos(), h.sin()).scale(k.speed));
                r.remaining -= 1;
                self.skill = Some(Skill::RandomWalk(r));
                self.running(tick, None)
            }
        }
    }

    fn run_search(
        &mut self,
        s: &mut SearchState,
        world: &World,
        frame: Option<&PerceptionFrame>,
        tick: u64,
        act: &mut Actuation,
        k: &crate::sim::Kinematics,
    ) -> NodeStatus {
        let robot = world.robot.pos;
        if s.awaiting {
            let Some(verdict) = s.verdict.take() else {
                let detail = self.bb.skill_status.value.detail.clone();
                self.skill = Some(Skill::Search(s.clone()));
                return self.running(tick, detail);
            };
            s.awaiting = false;
            let cand = s.candidate.take().unwrap_or_default();
            if verdict {
                self.target = Some(cand.clone());
                let text = format!("found {cand}");
                return self.finish(tick, SkillState::Succeeded, Some(StatusDetail::Note { text }));
            }
            s.rejected.insert(cand);
        }
        if s.candidate.is_none() {
            let zone = world.fixture.zone(&s.zone).map(|z| z.rect);
            let seen = frame.into_iter().flat_map(|f| f.detections.iter()).find(|d| {
                d.category == s.object
                    && !s.rejected.contains(&d.object_id)
                    && zone.is_none_or(|r| r.contains(robot + d.rel))
            });
            s.candidate = seen.map(|d| d.object_id.clone());
        }
        if let Some(cand) = s.candidate.clone() {
            let Some(pos) = world.object_pos(&cand) else {
                s.candidate = None;
                self.skill = Some(Skill::Search(s.clone()));
                return self.running(tick, None);
            };
            let gap = pos.dist(robot);
            if gap > k.standoff + 1e-9 {
                let toward = (pos - robot).scale((gap - k.standoff) / gap);
                act.target = Some(robot + toward);
                self.skill = Some(Skill::Search(s.clone()));
                return self.running(tick, None);
            }
            let det = frame
                .and_then(|f| f.detections.iter().find(|d| d.object_id == cand))
                .cloned();
            let Some(det) = det else {
                s.candidate = None;
                self.skill = Some(Skill::Search(s.clone()));
                return self.running(tick, None);
            };
            match self.grounding {
                Grounding::Strategic => {
                    s.awaiting = true;
                    let vmr = detection_vmr(&det, tick).to_string();
                    let detail = Some(StatusDetail::Candidate {
                        object_id: cand.clone(),
                        vmr,
                    });
                    self.skill = Some(Skill::Search(s.clone()));
                    return self.running(tick, detail);
                }
                Grounding::Local => {
                    let ok = s.features.iter().all(|(key, want)| match key.as_str() {
                        "label" => det.label.as_deref() == Some(want.as_str()),
                        _ => world
                            .object_features_of(&cand)
                            .and_then(|f| f.get(key))
                            .is_some_and(|f| crate::frames::render_filler(f).trim_matches('"') == want),
                    });
                    if ok {
                        self.target = Some(cand.clone());
                        let text = format!("found {cand}");
                        return self.finish(tick, SkillState::Succeeded, Some(StatusDetail::Note { text }));
                    }
                    s.rejected.insert(cand);
                    s.candidate = None;
                }
            }
        }
        // sweep, skipping path points already passed
        while s.idx + 1 < s.path.len() && robot.dist(s.path[s.idx + 1]) < s.path[s.idx].dist(s.path[s.idx + 1]) {
            s.idx += 1;
        }
        while s.idx < s.path.len() && s.path[s.idx].dist(robot) <= k.arrive_tolerance {
            s.idx += 1;
        }
        if s.idx >= s.path.len() {
            return self.fail(tick, format!("no matching {} found in {}", s.object, s.zone));
        }
        act.target = Some(s.path[s.idx]);
        self.skill = Some(Skill::Search(s.clone()));
        self.running(tick, None)
    }
}

/// How a go-to-object step is realized in [`go_to_object_trial`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoTo {
    /// Stored path; the strategic layer watches perception and sends STOP.
    WaypointThenStop,
    /// Tactical search that stops on its own.
    Search,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoToOutcome {
    pub halt: Vec2,
    pub target: Vec2,
    /// Along-track distance of the halt beyond the target (negative: short).
    pub past: f64,
    pub distance: f64,
    pub pickup_ok: bool,
    pub ticks: u64,
}

/// Drives the robot to the delivery target either way and then attempts a
/// pickup. Strategic outputs take `latency` ticks to land; a strategic
/// observer decides the robot has reached the target once a perception
/// frame shows it abeam or behind.
pub fn go_to_object_trial(world: &mut World, mode: GoTo, latency: u64) -> GoToOutcome {
    let target_id = world.fixture.delivery_target.clone();
    let target = world.object_pos(&target_id).expect("delivery target exists");
    let label = world
        .object(&target_id)
        .and_then(|o| o.label.clone())
        .unwrap_or_default();
    let start = world.robot.pos;
    let mut ctl = Controller::new(Grounding::Local);
    let first = match mode {
        GoTo::WaypointThenStop => Command::new(CommandName::Waypoint, &[("waypoint", "stores-far")]),
        GoTo::Search => Command::new(
            CommandName::Search,
            &[
                ("zone", "stores-zone"),
                ("object", "thermostat"),
                ("features", &format!("label:{label}")),
            ],
        ),
    }
    .expect("valid command");
    ctl.decode_command(&first, world, 0).expect("decodes");
    let dir = {
        let d = target - start;
        d.scale(1.0 / d.norm())
    };
    let mut stop_at: Option<u64> = None;
    let mut tick = 0;
    while tick < world.kin().budget {
        let frame = ctl.perceive(world, tick);
        if mode == GoTo::WaypointThenStop && stop_at.is_none() {
            let abeam = frame
                .detections
                .iter()
                .any(|d| d.object_id == target_id && d.rel.dot(dir) <= 0.0);
            if abeam {
                stop_at = Some(tick + latency);
            }
        }
        if stop_at == Some(tick) {
            ctl.decode_command(&Command::stop(), world, tick).expect("stop decodes");
        }
        let (act, status) = ctl.tick(world, tick);
        world.step(&act);
        tick += 1;
        if status.state != SkillState::Running {
            break;
        }
    }
    let halt = world.robot.pos;
    let pickup = Command::new(CommandName::Pickup, &[("object", target_id.as_str())]).expect("valid");
    ctl.decode_command(&pickup, world, tick).expect("decodes");
    ctl.perceive(world, tick);
    let (act, status) = ctl.tick(world, tick);
    world.step(&act);
    GoToOutcome {
        halt,
        target,
        past: (halt - target).dot(dir),
        distance: halt.dist(target),
        pickup_ok: status.state == SkillState::Succeeded && world.robot.gripper.as_deref() == Some(target_id.as_str()),
        ticks: tick,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::spawn;

    #[test]
    fn empty_surroundings_have_no_detections() {
        let mut w = spawn(0);
        w.robot.pos = Vec2::new(15.0, 5.0);
        let f = encode_frame(&w, 0);
        assert!(f.detections.is_empty());
        assert!(!f.collision);
    }

    #[test]
    fn label_needs_label_range() {
        let mut w = spawn(0);
        let t = w.object_pos("thermostat-new").unwrap();
        w.robot.pos = Vec2::new(t.x + 2.5, 5.0);
        let d = encode_frame(&w, 0)
            .detections
            .into_iter()
            .find(|d| d.object_id == "thermostat-new")
            .unwrap();
        assert_eq!(d.label, None);
        assert_eq!(d.category, "thermostat");
        w.robot.pos = Vec2::new(t.x + 1.0, 5.0);
        let d = encode_frame(&w, 0)
            .detections
            .into_iter()
            .find(|d| d.object_id == "thermostat-new")
            .unwrap();
        assert_eq!(d.label.as_deref(), Some("thermostat-new"));
    }

    #[test]
    fn stop_preempts_to_idle() {
        let mut w = spawn(0);
        let mut c = Controller::new(Grounding::Local);
        let wp = Command::new(CommandName::Waypoint, &[("waypoint", "stores-zone")]).unwrap();
        c.decode_command(&wp, &w, 0).unwrap();
        c.decode_command(&Command::stop(), &w, 0).unwrap();
        c.perceive(&w, 0);
        let (act, _) = c.tick(&mut w, 0);
        assert_eq!(c.active(), SkillKind::Idle);
        assert_eq!(act.target, None);
    }

    #[test]
    fn gripper_command_sets_flag_without_motion() {
        let mut w = spawn(0);
        let mut c = Controller::new(Grounding::Local);
        let g = Command::new(CommandName::Gripper, &[("state", "close")]).unwrap();
        c.decode_command(&g, &w, 0).unwrap();
        c.perceive(&w, 0);
        let (act, status) = c.tick(&mut w, 0);
        assert_eq!(act.gripper_open, Some(false));
        assert_eq!(act.target, None);
        assert_eq!(status.state, SkillState::Succeeded);
    }

    #[test]
    fn unknown_zone_is_a_decode_error() {
        let w = spawn(0);
        let mut c = Controller::new(Grounding::Local);
        let s = Command::new(CommandName::Search, &[("zone", "bridge"), ("object", "thermostat")]).unwrap();
        assert_eq!(
            c.decode_command(&s, &w, 0),
            Err(DecodeError::UnknownZone("bridge".into()))
        );
    }
}
