//! Planar kinematic world: differential-drive robots, movable objects,
//! contact detection and a quasi-static push/rotate model.

pub mod goal;
mod physics;
pub mod scenario;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Body, Pose2D, Shape, Vec2};

pub use goal::{check_goal, resolve_subject, world_target, GoalCheck, GoalError};
pub use physics::{detect_contacts, robot_in_contact, step, ContactPair};
pub use scenario::{make_scenario, Scenario, ScenarioParams, SpawnEvent, SpawnWhen, TaskName};

/// Default simulator step in seconds.
pub const DEFAULT_DT: f64 = 0.1;
pub const ARENA_WIDTH: f64 = 1.5;
pub const ARENA_HEIGHT: f64 = 1.0;
pub const CONTACT_SLACK: f64 = 0.005;
pub const ROBOT_RADIUS: f64 = 0.025;
pub const WHEEL_BASE: f64 = 0.04;
pub const V_MAX: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

impl WheelSpeeds {
    pub const STOP: WheelSpeeds = WheelSpeeds { left: 0.0, right: 0.0 };

    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    pub fn clamped(self, v_max: f64) -> Self {
        Self::new(self.left.clamp(-v_max, v_max), self.right.clamp(-v_max, v_max))
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }

    pub fn linear(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    pub fn angular(&self, wheel_base: f64) -> f64 {
        (self.right - self.left) / wheel_base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: EntityId,
    pub pose: Pose2D,
    pub wheel_speeds: WheelSpeeds,
    pub body_radius: f64,
    pub wheel_base: f64,
    #[serde(default = "default_robot_color")]
    pub color: String,
}

fn default_robot_color() -> String {
    "gray".to_string()
}

impl RobotState {
    /// A robot with the default body dimensions, at rest.
    pub fn new(id: EntityId, pose: Pose2D) -> Self {
        Self {
            id,
            pose,
            wheel_speeds: WheelSpeeds::STOP,
            body_radius: ROBOT_RADIUS,
            wheel_base: WHEEL_BASE,
            color: default_robot_color(),
        }
    }

    pub fn body(&self) -> Body {
        Body::new(self.pose, Shape::Circle { radius: self.body_radius })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: EntityId,
    pub pose: Pose2D,
    pub shape: Shape,
    pub color: String,
    pub movable: bool,
    pub required_pushers: u32,
}

impl ObjectState {
    pub fn body(&self) -> Body {
        Body::new(self.pose, self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entity {
    Robot(RobotState),
    Object(ObjectState),
}

impl Entity {
    pub fn id(&self) -> EntityId {
        match self {
            Entity::Robot(r) => r.id,
            Entity::Object(o) => o.id,
        }
    }

    pub fn pose(&self) -> Pose2D {
        match self {
            Entity::Robot(r) => r.pose,
            Entity::Object(o) => o.pose,
        }
    }
}

/// Read-only view over any entity of a world.
#[derive(Debug, Clone, Copy)]
pub enum EntityRef<'a> {
    Robot(&'a RobotState),
    Object(&'a ObjectState),
}

impl<'a> EntityRef<'a> {
    pub fn id(&self) -> EntityId {
        match self {
            EntityRef::Robot(r) => r.id,
            EntityRef::Object(o) => o.id,
        }
    }

    pub fn pose(&self) -> Pose2D {
        match self {
            EntityRef::Robot(r) => r.pose,
            EntityRef::Object(o) => o.pose,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            EntityRef::Robot(r) => Shape::Circle { radius: r.body_radius },
            EntityRef::Object(o) => o.shape,
        }
    }

    pub fn color(&self) -> &'a str {
        match self {
            EntityRef::Robot(r) => &r.color,
            EntityRef::Object(o) => &o.color,
        }
    }

    pub fn body(&self) -> Body {
        Body::new(self.pose(), self.shape())
    }

    pub fn is_robot(&self) -> bool {
        matches!(self, EntityRef::Robot(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Self { width: ARENA_WIDTH, height: ARENA_HEIGHT }
    }
}

impl Arena {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub contact_slack: f64,
    pub v_max: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { contact_slack: CONTACT_SLACK, v_max: V_MAX }
    }
}

/// Selects the entity a goal talks about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntitySelector {
    Id(EntityId),
    /// Matches every entity whose listed attributes all agree.
    Attr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<String>,
    },
}

impl EntitySelector {
    pub fn matches(&self, e: &EntityRef<'_>) -> bool {
        match self {
            EntitySelector::Id(id) => e.id() == *id,
            EntitySelector::Attr { color, shape } => {
                color.as_deref().is_none_or(|c| c == e.color())
                    && shape.as_deref().is_none_or(|s| s == e.shape().kind_name())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalTarget {
    Pose(Pose2D),
    Region { center: Vec2, radius: f64 },
}

impl GoalTarget {
    pub fn position(&self) -> Vec2 {
        match self {
            GoalTarget::Pose(p) => p.position(),
            GoalTarget::Region { center, .. } => *center,
        }
    }
}

/// Frame in which a goal target is expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalFrame {
    Absolute,
    /// The anchor entity's body frame.
    RelativeTo(EntityId),
    /// Origin at the anchor, x-axis pointing from the anchor toward `toward`.
    TowardPoint { anchor: EntityId, toward: Vec2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub subject: EntitySelector,
    pub target: GoalTarget,
    pub frame: GoalFrame,
    pub pos_tol: f64,
    pub ang_tol: f64,
    pub require_angle: bool,
}

impl GoalSpec {
    pub fn is_valid(&self) -> bool {
        self.pos_tol > 0.0 && (!self.require_angle || self.ang_tol > 0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown robot id {0}")]
    UnknownRobot(EntityId),
    #[error("unknown entity id {0}")]
    UnknownEntity(EntityId),
    #[error("duplicate entity id {0}")]
    DuplicateId(EntityId),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("entity {0} lies outside the arena")]
    OutsideArena(EntityId),
    #[error("invalid entity {0}: {1}")]
    InvalidEntity(EntityId, String),
    #[error("unknown task name `{0}`")]
    UnknownTask(String),
    #[error("invalid scenario parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub robots: Vec<RobotState>,
    pub objects: Vec<ObjectState>,
    pub arena: Arena,
    #[serde(default)]
    pub goals: Vec<GoalSpec>,
    #[serde(default)]
    pub params: SimParams,
}

impl WorldState {
    pub fn empty(arena: Arena) -> Self {
        Self {
            time: 0.0,
            robots: Vec::new(),
            objects: Vec::new(),
            arena,
            goals: Vec::new(),
            params: SimParams::default(),
        }
    }

    pub fn robot(&self, id: EntityId) -> Option<&RobotState> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn robot_mut(&mut self, id: EntityId) -> Option<&mut RobotState> {
        self.robots.iter_mut().find(|r| r.id == id)
    }

    pub fn object(&self, id: EntityId) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn entity(&self, id: EntityId) -> Option<EntityRef<'_>> {
        self.robot(id)
            .map(EntityRef::Robot)
            .or_else(|| self.object(id).map(EntityRef::Object))
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityRef<'_>> {
        self.robots
            .iter()
            .map(EntityRef::Robot)
            .chain(self.objects.iter().map(EntityRef::Object))
    }

    pub fn entity_ids(&self) -> BTreeSet<EntityId> {
        self.entities().map(|e| e.id()).collect()
    }

    pub fn robot_ids(&self) -> Vec<EntityId> {
        let mut ids: Vec<_> = self.robots.iter().map(|r| r.id).collect();
        ids.sort();
        ids
    }

    /// Checks id uniqueness, entity validity and arena containment.
    pub fn check(&self) -> Result<(), SimError> {
        let mut seen = BTreeSet::new();
        for e in self.entities() {
            if !seen.insert(e.id()) {
                return Err(SimError::DuplicateId(e.id()));
            }
            check_entity(&self.arena, e)?;
        }
        Ok(())
    }

    pub fn spawn_entity(&self, entity: Entity) -> Result<WorldState, SimError> {
        let id = entity.id();
        if self.entity(id).is_some() {
            return Err(SimError::DuplicateId(id));
        }
        let view = match &entity {
            Entity::Robot(r) => EntityRef::Robot(r),
            Entity::Object(o) => EntityRef::Object(o),
        };
        check_entity(&self.arena, view)?;
        let mut next = self.clone();
        match entity {
            Entity::Robot(r) => next.robots.push(r),
            Entity::Object(o) => next.objects.push(o),
        }
        Ok(next)
    }

    pub fn despawn_entity(&self, id: EntityId) -> Result<WorldState, SimError> {
        let mut next = self.clone();
        let before = next.robots.len() + next.objects.len();
        next.robots.retain(|r| r.id != id);
        next.objects.retain(|o| o.id != id);
        if next.robots.len() + next.objects.len() == before {
            return Err(SimError::UnknownEntity(id));
        }
        Ok(next)
    }
}

fn check_entity(arena: &Arena, e: EntityRef<'_>) -> Result<(), SimError> {
    let id = e.id();
    if !e.pose().is_finite() {
        return Err(SimError::NonFinite(format!("pose of entity {id}")));
    }
    if !arena.contains(e.pose().position()) {
        return Err(SimError::OutsideArena(id));
    }
    match e {
        EntityRef::Robot(r) => {
            if !(r.body_radius > 0.0 && r.wheel_base > 0.0) {
                return Err(SimError::InvalidEntity(id, "non-positive body dimensions".into()));
            }
        }
        EntityRef::Object(o) => {
            if !o.shape.is_valid() {
                return Err(SimError::InvalidEntity(id, "non-positive shape dimensions".into()));
            }
            if o.movable && o.required_pushers < 1 {
                return Err(SimError::InvalidEntity(id, "movable object needs ≥ 1 pusher".into()));
            }
        }
    }
    Ok(())
}
