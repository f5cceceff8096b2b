//! Demonstration traces: frames of entity states, validation, persistence
//! and scripted expert demonstrations.

mod io;
pub mod script;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2D, Shape};
use crate::sim::{Arena, EntityId, ObjectState, RobotState, WorldState};

pub use io::{load, parse_jsonl, save, to_jsonl, TraceError, TraceHeader, SCHEMA_VERSION};
pub use script::{follow_zone_ok, script_demo, script_demo_with, DemoOptions, FOLLOW_GAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Robot,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEntity {
    pub id: EntityId,
    pub kind: EntityKind,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub shape: Shape,
    pub color: String,
}

impl TraceEntity {
    pub fn pose(&self) -> Pose2D {
        Pose2D { x: self.x, y: self.y, theta: self.theta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub index: usize,
    pub t: f64,
    pub entities: Vec<TraceEntity>,
    /// Goal annotation: `Some(true)` marks a goal state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

impl Frame {
    pub fn from_world(index: usize, world: &WorldState) -> Self {
        let mut entities = Vec::with_capacity(world.robots.len() + world.objects.len());
        for r in &world.robots {
            entities.push(TraceEntity {
                id: r.id,
                kind: EntityKind::Robot,
                x: r.pose.x,
                y: r.pose.y,
                theta: r.pose.theta,
                shape: Shape::Circle { radius: r.body_radius },
                color: r.color.clone(),
            });
        }
        for o in &world.objects {
            entities.push(TraceEntity {
                id: o.id,
                kind: EntityKind::Object,
                x: o.pose.x,
                y: o.pose.y,
                theta: o.pose.theta,
                shape: o.shape,
                color: o.color.clone(),
            });
        }
        Frame { index, t: world.time, entities, label: None }
    }

    pub fn entity(&self, id: EntityId) -> Option<&TraceEntity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn ids(&self) -> BTreeSet<EntityId> {
        self.entities.iter().map(|e| e.id).collect()
    }

    pub fn robots(&self) -> impl Iterator<Item = &TraceEntity> {
        self.entities.iter().filter(|e| e.kind == EntityKind::Robot)
    }

    pub fn objects(&self) -> impl Iterator<Item = &TraceEntity> {
        self.entities.iter().filter(|e| e.kind == EntityKind::Object)
    }

    /// Rebuilds a world snapshot. Objects are assumed movable by one robot;
    /// robots get default drive parameters and zero wheel speeds.
    pub fn to_world(&self, arena: Arena) -> WorldState {
        let mut w = WorldState::empty(arena);
        w.time = self.t;
        for e in &self.entities {
            match e.kind {
                EntityKind::Robot => {
                    let mut r = RobotState::new(e.id, e.pose());
                    if let Shape::Circle { radius } = e.shape {
                        r.body_radius = radius;
                    }
                    r.color = e.color.clone();
                    w.robots.push(r);
                }
                EntityKind::Object => w.objects.push(ObjectState {
                    id: e.id,
                    pose: e.pose(),
                    shape: e.shape,
                    color: e.color.clone(),
                    movable: true,
                    required_pushers: 1,
                }),
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrace {
    pub task_name: String,
    pub dt: f64,
    pub frames: Vec<Frame>,
}

impl DemoTrace {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn has_annotations(&self) -> bool {
        self.frames.iter().any(|f| f.label.is_some())
    }

    /// Robot ids in first-appearance order.
    pub fn robot_ids(&self) -> Vec<EntityId> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for f in &self.frames {
            for e in f.robots() {
                if seen.insert(e.id) {
                    out.push(e.id);
                }
            }
        }
        out
    }

    /// Adds zero-mean uniform position noise of the given amplitude.
    pub fn with_position_noise(&self, amplitude: f64, seed: u64) -> DemoTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        if amplitude <= 0.0 {
            return out;
        }
        for f in &mut out.frames {
            for e in &mut f.entities {
                e.x += rng.random_range(-amplitude..=amplitude);
                e.y += rng.random_range(-amplitude..=amplitude);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub frame: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.frame {
            Some(i) => write!(f, "frame {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every invariant violation in the trace; empty means valid.
pub fn validate(trace: &DemoTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |frame: Option<usize>, message: String| out.push(Violation { frame, message });
    if trace.frames.len() < 2 {
        push(None, format!("trace has {} frames, need at least 2", trace.frames.len()));
    }
    if !(trace.dt > 0.0 && trace.dt.is_finite()) {
        push(None, format!("dt must be positive and finite, got {}", trace.dt));
    }
    let mut kinds: BTreeMap<EntityId, EntityKind> = BTreeMap::new();
    for (k, f) in trace.frames.iter().enumerate() {
        if f.index != k {
            push(Some(k), format!("index field is {}, expected {k}", f.index));
        }
        if !f.t.is_finite() {
            push(Some(k), "non-finite timestamp".into());
        }
        if k > 0 {
            let prev = &trace.frames[k - 1];
            if f.t <= prev.t {
                push(Some(k), format!("timestamp {} at frame {k} not after {} at frame {}", f.t, prev.t, k - 1));
            } else if trace.dt > 0.0 && ((f.t - prev.t) - trace.dt).abs() > 1e-9 {
                push(Some(k), format!("frame spacing {} differs from dt {}", f.t - prev.t, trace.dt));
            }
        }
        let mut ids = BTreeSet::new();
        for e in &f.entities {
            if !ids.insert(e.id) {
                push(Some(k), format!("duplicate entity id {}", e.id));
            }
            if !(e.x.is_finite() && e.y.is_finite() && e.theta.is_finite()) {
                push(Some(k), format!("non-finite pose for entity {}", e.id));
            }
            if !e.shape.is_valid() {
                push(Some(k), format!("invalid shape for entity {}", e.id));
            }
            match kinds.get(&e.id) {
                Some(kind) if *kind != e.kind => {
                    push(Some(k), format!("entity {} changes kind from {kind:?} to {:?}", e.id, e.kind))
                }
                Some(_) => {}
                None => {
                    kinds.insert(e.id, e.kind);
                }
            }
        }
    }
    out
}
