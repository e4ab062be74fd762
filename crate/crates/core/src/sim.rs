//! Deterministic 2D shipboard world: zones, labeled objects, the mechanic,
//! the robot and a simulated clock. Ground truth for evaluation lives here.
//!
//! Geometry is kinematic: the robot is a disc that moves at most `speed`
//! metres per tick toward a target point, stopping at first contact with a
//! wall or another disc.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frames::{parse_frames, Filler, FrameInstance};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, p: Vec2) -> bool {
        self.x0 <= p.x && p.x <= self.x1 && self.y0 <= p.y && p.y <= self.y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub name: String,
    pub rect: Rect,
    /// Search sweep, visited in order.
    pub sweep: Vec<Vec2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub tick_seconds: f64,
    pub budget: u64,
    /// metres per tick
    pub speed: f64,
    pub grasp_radius: f64,
    pub detection_range: f64,
    pub label_range: f64,
    pub robot_radius: f64,
    pub object_radius: f64,
    pub person_radius: f64,
    pub delivery_radius: f64,
    /// Distance at which search halts in front of a candidate.
    pub standoff: f64,
    pub arrive_tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    At(Vec2),
    Held,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: String,
    pub concept: String,
    pub shape_class: String,
    /// Fiducial label, readable within label range.
    pub label: Option<String>,
    /// Ground-truth features in frame form.
    pub features: FrameInstance,
    pub placement: Placement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuestionKind {
    Features,
    Location,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    /// Fires at tick 0.
    Start,
    /// Fires after the first agent utterance following the named turn, or
    /// `timeout` ticks after that turn when the agent stays silent.
    ReplyTo { turn: String, timeout: Option<u64> },
    /// Fires when the agent asks this kind of question.
    Question(QuestionKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    pub id: String,
    pub trigger: Trigger,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavNode {
    pub id: String,
    pub pos: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFixture {
    pub version: String,
    pub scenario_date: String,
    pub kinematics: Kinematics,
    pub zones: Vec<Zone>,
    pub nodes: Vec<NavNode>,
    pub edges: Vec<(String, String)>,
    pub robot_start: Vec2,
    pub daniel: Vec2,
    pub objects: Vec<WorldObject>,
    /// `(tick, frame)` snapshots preloaded into episodic memory.
    pub episodic: Vec<(u64, FrameInstance)>,
    pub turns: Vec<ScriptedTurn>,
    pub delivery_target: String,
    /// Daniel's reply delay in ticks.
    pub reply_delay: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixtureError {
    #[error("fixture line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("fixture is missing {0}")]
    Missing(String),
}

fn f64_field(line: usize, s: &str) -> Result<f64, FixtureError> {
    s.parse().map_err(|_| FixtureError::Syntax {
        line,
        message: format!("expected a number, found `{s}`"),
    })
}

fn point(line: usize, s: &str) -> Result<Vec2, FixtureError> {
    let (x, y) = s.split_once(',').ok_or_else(|| FixtureError::Syntax {
        line,
        message: format!("expected `x,y`, found `{s}`"),
    })?;
    Ok(Vec2::new(f64_field(line, x)?, f64_field(line, y)?))
}

fn quoted(line: usize, s: &str) -> Result<String, FixtureError> {
    s.trim()
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .map(str::to_string)
        .ok_or_else(|| FixtureError::Syntax {
            line,
            message: "expected a quoted string".into(),
        })
}

impl ScenarioFixture {
    pub fn parse(src: &str) -> Result<Self, FixtureError> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut zones: Vec<Zone> = Vec::new();
        let mut sweeps: BTreeMap<String, Vec<Vec2>> = BTreeMap::new();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut objects: Vec<(usize, String, String, Vec2, String)> = Vec::new();
        let mut episodic = Vec::new();
        let mut turns = Vec::new();

        for (i, raw) in src.lines().enumerate() {
            let no = i + 1;
            let code = match raw.find("//") {
                Some(p) if !raw[..p].contains('"') => &raw[..p],
                _ => raw,
            };
            if code.trim().is_empty() {
                continue;
            }
            let syntax = |message: &str| FixtureError::Syntax {
                line: no,
                message: message.to_string(),
            };
            if code.starts_with(char::is_whitespace) {
                let (_, _, _, _, body) = objects
                    .last_mut()
                    .ok_or_else(|| syntax("feature line outside an object"))?;
                body.push_str("  ");
                body.push_str(code.trim());
                body.push('\n');
                continue;
            }
            let words: Vec<&str> = code.split_whitespace().collect();
            match words[0] {
                "zone" if words.len() == 6 => zones.push(Zone {
                    name: words[1].to_string(),
                    rect: Rect {
                        x0: f64_field(no, words[2])?,
                        y0: f64_field(no, words[3])?,
                        x1: f64_field(no, words[4])?,
                        y1: f64_field(no, words[5])?,
                    },
                    sweep: Vec::new(),
                }),
                "sweep" if words.len() >= 3 => {
                    let pts = words[2..].iter().map(|w| point(no, w)).collect::<Result<_, _>>()?;
                    sweeps.insert(words[1].to_string(), pts);
                }
                "node" if words.len() == 3 => nodes.push(NavNode {
                    id: words[1].to_string(),
                    pos: point(no, words[2])?,
                }),
                "edge" if words.len() == 3 => edges.push((words[1].to_string(), words[2].to_string())),
                "object" if words.len() == 4 => objects.push((
                    no,
                    words[1].to_string(),
                    words[2].to_string(),
                    point(no, words[3])?,
                    String::new(),
                )),
                "episodic" if words.len() >= 4 => {
                    let tick = words[1].parse().map_err(|_| syntax("bad tick"))?;
                    let text = format!("#{}.1\n  {}\n", words[2], words[3..].join(" "));
                    let doc = parse_frames(&text).map_err(|e| syntax(&e.to_string()))?;
                    episodic.push((tick, doc.frames[0].clone()));
                }
                "turn" if words.len() >= 4 => {
                    let id = words[1].to_string();
                    let (trigger, rest_at) = match words[2] {
                        "start" => (Trigger::Start, 3),
                        "reply-to" => {
                            let turn = words.get(3).ok_or_else(|| syntax("reply-to needs a turn"))?.to_string();
                            if words.get(4) == Some(&"timeout") {
                                let t = words
                                    .get(5)
                                    .and_then(|w| w.parse().ok())
                                    .ok_or_else(|| syntax("bad timeout"))?;
                                (Trigger::ReplyTo { turn, timeout: Some(t) }, 6)
                            } else {
                                (Trigger::ReplyTo { turn, timeout: None }, 4)
                            }
                        }
                        "question" => {
                            let kind = match words.get(3) {
                                Some(&"features") => QuestionKind::Features,
                                Some(&"location") => QuestionKind::Location,
                                _ => return Err(syntax("question kind must be features or location")),
                            };
                            (Trigger::Question(kind), 4)
                        }
                        _ => return Err(syntax("unknown trigger")),
                    };
                    let text_start = code
                        .find('"')
                        .filter(|_| words.len() > rest_at)
                        .ok_or_else(|| syntax("turn needs quoted text"))?;
                    turns.push(ScriptedTurn {
                        id,
                        trigger,
                        text: quoted(no, &code[text_start..])?,
                    });
                }
                key if words.len() >= 2 => {
                    kv.insert(key.to_string(), (no, words[1..].join(" ")));
                }
                _ => return Err(syntax("unrecognized record")),
            }
        }

        for z in &mut zones {
            z.sweep = sweeps.remove(&z.name).unwrap_or_default();
        }
        if !zones.iter().any(|z| z.name == "stores-zone") {
            return Err(FixtureError::Missing("zone stores-zone".into()));
        }
        let get = |k: &str| -> Result<(usize, String), FixtureError> {
            kv.get(k).cloned().ok_or_else(|| FixtureError::Missing(k.to_string()))
        };
        let num = |k: &str| -> Result<f64, FixtureError> {
            let (line, v) = get(k)?;
            f64_field(line, &v)
        };
        let kinematics = Kinematics {
            tick_seconds: num("tick-seconds")?,
            budget: num("budget")? as u64,
            speed: num("speed")?,
            grasp_radius: num("grasp-radius")?,
            detection_range: num("detection-range")?,
            label_range: num("label-range")?,
            robot_radius: num("robot-radius")?,
            object_radius: num("object-radius")?,
            person_radius: num("person-radius")?,
            delivery_radius: num("delivery-radius")?,
            standoff: num("standoff")?,
            arrive_tolerance: num("arrive-tolerance")?,
        };
        let objects = objects
            .into_iter()
            .map(|(line, id, concept, pos, body)| {
                let doc = parse_frames(&format!("#{concept}.1\n{body}")).map_err(|e| FixtureError::Syntax {
                    line,
                    message: e.to_string(),
                })?;
                let features = doc.frames.into_iter().next().unwrap();
                let shape_class = features
                    .get("shape-class")
                    .and_then(Filler::as_text)
                    .unwrap_or("unknown")
                    .to_string();
                let label = features.get("label").and_then(Filler::as_text).map(str::to_string);
                Ok(WorldObject {
                    id,
                    concept,
                    shape_class,
                    label,
                    features,
                    placement: Placement::At(pos),
                })
            })
            .collect::<Result<Vec<_>, FixtureError>>()?;
        let (line, robot) = get("robot")?;
        let robot_start = point(line, &robot)?;
        let (line, daniel) = get("daniel")?;
        let daniel = point(line, &daniel)?;
        let delivery_target = get("delivery-target")?.1;
        if !objects.iter().any(|o| o.id == delivery_target) {
            return Err(FixtureError::Missing(format!("object {delivery_target}")));
        }
        Ok(Self {
            version: get("version")?.1,
            scenario_date: get("scenario-date")?.1,
            kinematics,
            zones,
            nodes,
            edges,
            robot_start,
            daniel,
            objects,
            episodic,
            turns,
            delivery_target,
            reply_delay: num("reply-delay")? as u64,
        })
    }

    /// The bundled thermostat scenario.
    pub fn canonical() -> Arc<Self> {
        static F: std::sync::OnceLock<Arc<ScenarioFixture>> = std::sync::OnceLock::new();
        F.get_or_init(|| {
            Arc::new(Self::parse(include_str!("../fixtures/world.fixture")).expect("bundled world fixture"))
        })
        .clone()
    }

    pub fn zone(&self, name: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.name == name)
    }

    pub fn node(&self, id: &str) -> Option<&NavNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Waypoint id to position: nav nodes, zone names (first sweep point or
    /// centre), or literal `x,y`.
    pub fn resolve_waypoint(&self, id: &str) -> Option<Vec2> {
        if let Some(n) = self.node(id) {
            return Some(n.pos);
        }
        if let Some(z) = self.zone(id) {
            return Some(Vec2::new((z.rect.x0 + z.rect.x1) / 2.0, (z.rect.y0 + z.rect.y1) / 2.0));
        }
        let (x, y) = id.split_once(',')?;
        Some(Vec2::new(x.trim().parse().ok()?, y.trim().parse().ok()?))
    }

    /// Shortest route over the nav graph from `from` to `to`; the route enters
    /// the graph at whichever node minimizes total length.
    pub fn route(&self, from: Vec2, to: Vec2) -> Vec<Vec2> {
        let n = self.nodes.len();
        if n == 0 || self.straight_line_clear(from, to) {
            return vec![to];
        }
        let idx = |id: &str| self.nodes.iter().position(|x| x.id == id);
        let mut adj = vec![Vec::new(); n];
        for (a, b) in &self.edges {
            if let (Some(i), Some(j)) = (idx(a), idx(b)) {
                let w = self.nodes[i].pos.dist(self.nodes[j].pos);
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        // Dijkstra from a virtual source connected to every visible node.
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        for (d, node) in dist.iter_mut().zip(&self.nodes) {
            if self.straight_line_clear(from, node.pos) {
                *d = from.dist(node.pos);
            }
        }
        while let Some(u) = (0..n)
            .filter(|&i| !done[i] && dist[i].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        {
            done[u] = true;
            for &(v, w) in &adj[u] {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    prev[v] = u;
                }
            }
        }
        let best = (0..n)
            .filter(|&i| dist[i].is_finite() && self.straight_line_clear(self.nodes[i].pos, to))
            .min_by(|&a, &b| (dist[a] + self.nodes[a].pos.dist(to)).total_cmp(&(dist[b] + self.nodes[b].pos.dist(to))));
        let Some(mut cur) = best else {
            return vec![to];
        };
        let mut path = vec![to];
        loop {
            path.push(self.nodes[cur].pos);
            if prev[cur] == usize::MAX {
                break;
            }
            cur = prev[cur];
        }
        path.reverse();
        path.dedup_by(|a, b| a.dist(*b) < 1e-9);
        path
    }

    fn free(&self, p: Vec2) -> bool {
        self.zones.iter().any(|z| z.rect.contains(p))
    }

    /// Whether a point robot can travel the segment without leaving the zones.
    pub fn straight_line_clear(&self, a: Vec2, b: Vec2) -> bool {
        let steps = (a.dist(b) / 0.1).ceil().max(1.0) as usize;
        (0..=steps).all(|i| self.free(a + (b - a).scale(i as f64 / steps as f64)))
    }

    pub fn zone_of(&self, p: Vec2) -> Option<&str> {
        self.zones.iter().find(|z| z.rect.contains(p)).map(|z| z.name.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pos: Vec2,
    /// radians
    pub heading: f64,
    /// metres per tick over the last step
    pub speed: f64,
    /// Held object id.
    pub gripper: Option<String>,
    pub gripper_open: bool,
}

/// One tick of motor output from the tactical layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Actuation {
    /// Move toward this point, at most `max_step` metres.
    pub target: Option<Vec2>,
    pub max_step: f64,
    pub pickup: Option<String>,
    /// Drop the held object at this point.
    pub drop_at: Option<Vec2>,
    pub gripper_open: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvents {
    pub collision: bool,
    pub picked: Option<String>,
    pub dropped: Option<String>,
    /// Why a requested pickup or drop did not happen.
    pub refused: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct World {
    pub tick: u64,
    #[serde(skip)]
    pub fixture: Arc<ScenarioFixture>,
    pub robot: RobotState,
    pub objects: Vec<WorldObject>,
    pub daniel: Vec2,
    pub collision: bool,
    #[serde(skip)]
    rng: ChaCha8Rng,
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.tick == other.tick
            && self.robot == other.robot
            && self.objects == other.objects
            && self.daniel == other.daniel
            && self.collision == other.collision
            && self.rng == other.rng
            && *self.fixture == *other.fixture
    }
}

pub fn spawn(seed: u64) -> World {
    World::spawn(ScenarioFixture::canonical(), seed)
}

impl World {
    pub fn spawn(fixture: Arc<ScenarioFixture>, seed: u64) -> Self {
        Self {
            tick: 0,
            robot: RobotState {
                pos: fixture.robot_start,
                heading: 0.0,
                speed: 0.0,
                gripper: None,
                gripper_open: true,
            },
            objects: fixture.objects.clone(),
            daniel: fixture.daniel,
            collision: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            fixture,
        }
    }

    pub fn kin(&self) -> &Kinematics {
        &self.fixture.kinematics
    }

    pub fn object(&self, id: &str) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Current position; a held object is where the robot is.
    pub fn object_pos(&self, id: &str) -> Option<Vec2> {
        self.object(id).map(|o| match o.placement {
            Placement::At(p) => p,
            Placement::Held => self.robot.pos,
        })
    }

    /// Uniform draw in `[0, 1)` from the world's seeded stream.
    pub fn random_unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn blocked(&self, p: Vec2) -> bool {
        let k = self.kin();
        let r = k.robot_radius;
        let outside = (0..8).any(|i| {
            let a = i as f64 * std::f64::consts::FRAC_PI_4;
            !self.fixture.free(p + Vec2::new(a.cos() * r, a.sin() * r))
        }) || !self.fixture.free(p);
        outside
            || self.objects.iter().any(|o| match o.placement {
                Placement::At(q) => q.dist(p) < r + k.object_radius,
                Placement::Held => false,
            })
            || self.daniel.dist(p) < r + k.person_radius
    }

    /// Advances one tick.
    pub fn step(&mut self, act: &Actuation) -> StepEvents {
        let mut ev = StepEvents::default();
        let start = self.robot.pos;
        if let Some(open) = act.gripper_open {
            self.robot.gripper_open = open;
        }
        if let Some(target) = act.target {
            let delta = target - start;
            let len = delta.norm();
            let step = len.min(act.max_step.min(self.kin().speed).max(0.0));
            if len > 1e-12 && step > 0.0 {
                let dir = delta.scale(1.0 / len);
                let full = start + dir.scale(step);
                if self.blocked(full) {
                    ev.collision = true;
                    let (mut lo, mut hi) = (0.0, step);
                    for _ in 0..30 {
                        let mid = (lo + hi) / 2.0;
                        if self.blocked(start + dir.scale(mid)) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    self.robot.pos = start + dir.scale(lo);
                } else {
                    self.robot.pos = full;
                }
                self.robot.heading = dir.y.atan2(dir.x);
            }
        }
        self.robot.speed = self.robot.pos.dist(start);
        self.collision = ev.collision;

        if let Some(id) = &act.pickup {
            let grasp = self.kin().grasp_radius;
            let robot = self.robot.pos;
            match self.objects.iter_mut().find(|o| &o.id == id) {
                _ if self.robot.gripper.is_some() => ev.refused = Some("gripper occupied".into()),
                None => ev.refused = Some(format!("no object {id}")),
                Some(o) => match o.placement {
                    Placement::At(p) if p.dist(robot) <= grasp => {
                        o.placement = Placement::Held;
                        self.robot.gripper = Some(id.clone());
                        self.robot.gripper_open = false;
                        ev.picked = Some(id.clone());
                    }
                    Placement::At(_) => ev.refused = Some("object beyond grasp radius".into()),
                    Placement::Held => ev.refused = Some("object already held".into()),
                },
            }
        }
        if let Some(at) = act.drop_at {
            match self.robot.gripper.take() {
                None => ev.refused = Some("gripper empty".into()),
                Some(id) => {
                    if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                        o.placement = Placement::At(at);
                    }
                    self.robot.gripper_open = true;
                    ev.dropped = Some(id);
                }
            }
        }
        self.tick += 1;
        ev
    }

    pub fn is_delivered(&self) -> bool {
        let k = self.kin().delivery_radius;
        matches!(
            self.object(&self.fixture.delivery_target).map(|o| o.placement),
            Some(Placement::At(p)) if p.dist(self.daniel) <= k
        )
    }

    pub fn object_features_of(&self, id: &str) -> Option<&FrameInstance> {
        self.object(id).map(|o| &o.features)
    }

    /// Zone holding the object, or `gripper` while held.
    pub fn object_location_of(&self, id: &str) -> Option<String> {
        match self.object(id)?.placement {
            Placement::Held => Some("gripper".into()),
            Placement::At(p) => self.fixture.zone_of(p).map(str::to_string),
        }
    }

    /// Digest of the serialized dynamic state.
    pub fn state_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("world serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
