//! Seeded task scenarios.
//!
//! Parameter schema (`ScenarioParams`, all fields optional):
//!
//! | field     | tasks                                   | default            |
//! |-----------|-----------------------------------------|--------------------|
//! | `robots`  | all                                     | 3 / 3 / 1 / 2 / 1  |
//! | `objects` | color_sorting                           | 4 (max 4)          |
//! | `pushers` | object_transport (required pushers)     | robot count        |
//!
//! Entity ids: robots are `1..=k`, the intruder is `100`, task objects are
//! `101, 102, ...` in order of appearance.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2D, Shape, Vec2};

use super::{
    check_goal, Arena, Entity, EntityId, EntitySelector, GoalFrame, GoalSpec, GoalTarget,
    ObjectState, RobotState, SimError, WorldState,
};

pub const INTRUDER_ID: EntityId = EntityId(100);
pub const FIRST_OBJECT_ID: u32 = 101;
pub const INTRUDER_RADIUS: f64 = 0.03;
pub const DISK_RADIUS: f64 = 0.035;
pub const TRANSPORT_POS_TOL: f64 = 0.05;
pub const ROTATE_ANG_TOL: f64 = 2.0 * PI / 180.0;
pub const SORT_REGION_RADIUS: f64 = 0.04;
pub const SORT_POS_TOL: f64 = 0.01;
/// Where the demonstrated leader heads in the leader/follower task.
pub const LEADER_DESTINATION: Vec2 = Vec2::new(1.05, 0.5);
pub const PALETTE: [&str; 6] = ["red", "green", "blue", "yellow", "purple", "orange"];
/// Sorting bins: color and region center.
pub const SORT_BINS: [(&str, Vec2); 4] = [
    ("red", Vec2::new(0.4, 0.25)),
    ("green", Vec2::new(1.1, 0.25)),
    ("blue", Vec2::new(0.4, 0.75)),
    ("yellow", Vec2::new(1.1, 0.75)),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskName {
    IntruderAttack,
    LeaderFollower,
    ObjectTransport,
    ObjectRotate,
    ColorSorting,
}

impl TaskName {
    pub const ALL: [TaskName; 5] = [
        TaskName::IntruderAttack,
        TaskName::LeaderFollower,
        TaskName::ObjectTransport,
        TaskName::ObjectRotate,
        TaskName::ColorSorting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskName::IntruderAttack => "intruder_attack",
            TaskName::LeaderFollower => "leader_follower",
            TaskName::ObjectTransport => "object_transport",
            TaskName::ObjectRotate => "object_rotate",
            TaskName::ColorSorting => "color_sorting",
        }
    }

    fn salt(&self) -> u64 {
        match self {
            TaskName::IntruderAttack => 0x1a7,
            TaskName::LeaderFollower => 0x2b8,
            TaskName::ObjectTransport => 0x3c9,
            TaskName::ObjectRotate => 0x4da,
            TaskName::ColorSorting => 0x5eb,
        }
    }
}

impl fmt::Display for TaskName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskName {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SimError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub robots: Option<usize>,
    pub objects: Option<usize>,
    pub pushers: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnWhen {
    /// At the start of the given simulator step.
    AtStep(u64),
    /// Once the given entity satisfies a world goal that selects it.
    AfterInGoal(EntityId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnEvent {
    pub entity: Entity,
    pub when: SpawnWhen,
}

/// A seeded world plus the entity spawns that act as behavior triggers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: TaskName,
    pub seed: u64,
    pub world: WorldState,
    pub spawns: Vec<SpawnEvent>,
}

impl Scenario {
    /// Applies every spawn that is due at `step`, returning the new ids.
    pub fn apply_due_spawns(&mut self, world: &mut WorldState, step: u64) -> Vec<EntityId> {
        let mut spawned = Vec::new();
        let mut i = 0;
        while i < self.spawns.len() {
            let due = match &self.spawns[i].when {
                SpawnWhen::AtStep(k) => step >= *k,
                SpawnWhen::AfterInGoal(id) => entity_in_world_goal(world, *id),
            };
            if due {
                let ev = self.spawns.remove(i);
                let id = ev.entity.id();
                if let Ok(next) = world.spawn_entity(ev.entity) {
                    *world = next;
                    spawned.push(id);
                }
            } else {
                i += 1;
            }
        }
        spawned
    }

    pub fn pending_spawns(&self) -> usize {
        self.spawns.len()
    }
}

/// True when `id` is the unique subject of some world goal that holds.
pub fn entity_in_world_goal(world: &WorldState, id: EntityId) -> bool {
    let Some(e) = world.entity(id) else { return false };
    world
        .goals
        .iter()
        .filter(|g| g.subject.matches(&e))
        .any(|g| check_goal(world, g).map(|c| c.satisfied).unwrap_or(false))
}

pub fn make_scenario(task: TaskName, seed: u64, params: &ScenarioParams) -> Result<Scenario, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ task.salt());
    let mut world = WorldState::empty(Arena::default());
    let mut spawns = Vec::new();
    match task {
        TaskName::IntruderAttack => {
            let k = params.robots.unwrap_or(3);
            check_count("robots", k, 1, 8)?;
            world.robots = place_robots(&mut rng, k, (0.1, 0.45), (0.15, 0.85), 0.13);
            let color = PALETTE[rng.random_range(0..PALETTE.len())];
            let pos = Vec2::new(rng.random_range(0.9..1.3), rng.random_range(0.3..0.7));
            let intruder = ObjectState {
                id: INTRUDER_ID,
                pose: Pose2D::new(pos.x, pos.y, 0.0),
                shape: Shape::Circle { radius: INTRUDER_RADIUS },
                color: color.to_string(),
                movable: false,
                required_pushers: 1,
            };
            let at = rng.random_range(5..=15);
            spawns.push(SpawnEvent { entity: Entity::Object(intruder), when: SpawnWhen::AtStep(at) });
        }
        TaskName::LeaderFollower => {
            let k = params.robots.unwrap_or(3);
            check_count("robots", k, 2, 6)?;
            let leader = Pose2D::new(
                rng.random_range(0.3..0.4),
                rng.random_range(0.4..0.6),
                rng.random_range(-0.3..0.3),
            );
            let mut robots = vec![RobotState::new(EntityId(1), leader)];
            let followers = place_robots(&mut rng, k - 1, (0.05, 0.22), (0.15, 0.85), 0.13);
            for (i, mut f) in followers.into_iter().enumerate() {
                f.id = EntityId(i as u32 + 2);
                robots.push(f);
            }
            world.robots = robots;
        }
        TaskName::ObjectTransport => {
            let k = params.robots.unwrap_or(1);
            check_count("robots", k, 1, 4)?;
            let pushers = params.pushers.unwrap_or(k as u32);
            if pushers < 1 || pushers as usize > k {
                return Err(SimError::BadParams(format!("pushers must be in 1..={k}")));
            }
            world.robots = place_robots(&mut rng, k, (0.08, 0.25), (0.2, 0.8), 0.1);
            let color = PALETTE[rng.random_range(0..PALETTE.len())];
            let obj = Vec2::new(rng.random_range(0.45..0.55), rng.random_range(0.35..0.65));
            let goal = Vec2::new(rng.random_range(0.85..0.95), rng.random_range(0.35..0.65));
            let radius = if pushers > 1 { 0.05 } else { DISK_RADIUS };
            world.objects.push(ObjectState {
                id: EntityId(FIRST_OBJECT_ID),
                pose: Pose2D::new(obj.x, obj.y, 0.0),
                shape: Shape::Circle { radius },
                color: color.to_string(),
                movable: true,
                required_pushers: pushers,
            });
            world.goals.push(GoalSpec {
                subject: EntitySelector::Id(EntityId(FIRST_OBJECT_ID)),
                target: GoalTarget::Pose(Pose2D::new(goal.x, goal.y, 0.0)),
                frame: GoalFrame::Absolute,
                pos_tol: TRANSPORT_POS_TOL,
                ang_tol: ROTATE_ANG_TOL,
                require_angle: false,
            });
        }
        TaskName::ObjectRotate => {
            let k = params.robots.unwrap_or(2);
            check_count("robots", k, 2, 4)?;
            world.robots = place_robots(&mut rng, k, (0.1, 0.35), (0.15, 0.85), 0.1);
            let c = Vec2::new(rng.random_range(0.65..0.85), rng.random_range(0.4..0.6));
            let theta = rng.random_range(-PI..PI);
            let color = PALETTE[rng.random_range(0..PALETTE.len())];
            world.objects.push(ObjectState {
                id: EntityId(FIRST_OBJECT_ID),
                pose: Pose2D::new(c.x, c.y, theta),
                shape: Shape::Rectangle { width: 0.16, height: 0.05 },
                color: color.to_string(),
                movable: true,
                required_pushers: 2,
            });
            world.goals.push(GoalSpec {
                subject: EntitySelector::Id(EntityId(FIRST_OBJECT_ID)),
                target: GoalTarget::Pose(Pose2D::new(c.x, c.y, theta + PI)),
                frame: GoalFrame::Absolute,
                pos_tol: TRANSPORT_POS_TOL,
                ang_tol: ROTATE_ANG_TOL,
                require_angle: true,
            });
        }
        TaskName::ColorSorting => {
            let k = params.robots.unwrap_or(1);
            check_count("robots", k, 1, 2)?;
            let n = params.objects.unwrap_or(4);
            check_count("objects", n, 1, SORT_BINS.len())?;
            world.robots = place_robots(&mut rng, k, (0.6, 0.9), (0.07, 0.12), 0.08);
            for (color, center) in SORT_BINS {
                world.goals.push(GoalSpec {
                    subject: EntitySelector::Attr { color: Some(color.to_string()), shape: None },
                    target: GoalTarget::Region { center, radius: SORT_REGION_RADIUS },
                    frame: GoalFrame::Absolute,
                    pos_tol: SORT_POS_TOL,
                    ang_tol: ROTATE_ANG_TOL,
                    require_angle: false,
                });
            }
            let mut colors: Vec<&str> = SORT_BINS.iter().map(|(c, _)| *c).collect();
            colors.shuffle(&mut rng);
            for (i, color) in colors.into_iter().take(n).enumerate() {
                let p = Vec2::new(rng.random_range(0.68..0.82), rng.random_range(0.43..0.57));
                let obj = ObjectState {
                    id: EntityId(FIRST_OBJECT_ID + i as u32),
                    pose: Pose2D::new(p.x, p.y, 0.0),
                    shape: Shape::Circle { radius: DISK_RADIUS },
                    color: color.to_string(),
                    movable: true,
                    required_pushers: 1,
                };
                if i == 0 {
                    world.objects.push(obj);
                } else {
                    spawns.push(SpawnEvent {
                        entity: Entity::Object(obj),
                        when: SpawnWhen::AfterInGoal(EntityId(FIRST_OBJECT_ID + i as u32 - 1)),
                    });
                }
            }
        }
    }
    world.check()?;
    Ok(Scenario { task, seed, world, spawns })
}

fn check_count(name: &str, k: usize, lo: usize, hi: usize) -> Result<(), SimError> {
    if k < lo || k > hi {
        return Err(SimError::BadParams(format!("{name} must be in {lo}..={hi}, got {k}")));
    }
    Ok(())
}

fn place_robots(
    rng: &mut ChaCha8Rng,
    k: usize,
    xr: (f64, f64),
    yr: (f64, f64),
    min_sep: f64,
) -> Vec<RobotState> {
    let mut out: Vec<RobotState> = Vec::with_capacity(k);
    let mut sep = min_sep;
    while out.len() < k {
        let mut placed = false;
        for _ in 0..200 {
            let p = Vec2::new(rng.random_range(xr.0..xr.1), rng.random_range(yr.0..yr.1));
            if out.iter().all(|r| (r.pose.position() - p).norm() >= sep) {
                let theta = rng.random_range(-PI..PI);
                out.push(RobotState::new(EntityId(out.len() as u32 + 1), Pose2D::new(p.x, p.y, theta)));
                placed = true;
                break;
            }
        }
        if !placed {
            // Region too crowded for the requested separation.
            sep *= 0.8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intruder_scenario_structure() {
        let s = make_scenario(TaskName::IntruderAttack, 7, &ScenarioParams { robots: Some(3), ..Default::default() })
            .unwrap();
        assert_eq!(s.world.robots.len(), 3);
        assert!(s.world.objects.is_empty());
        assert_eq!(s.spawns.len(), 1);
    }

    #[test]
    fn deterministic_in_seed() {
        for task in TaskName::ALL {
            let a = make_scenario(task, 11, &ScenarioParams::default()).unwrap();
            let b = make_scenario(task, 11, &ScenarioParams::default()).unwrap();
            assert_eq!(a, b);
            let c = make_scenario(task, 12, &ScenarioParams::default()).unwrap();
            assert_ne!(a.world, c.world);
        }
    }

    #[test]
    fn color_sorting_has_distinct_colors_and_bins() {
        let s = make_scenario(TaskName::ColorSorting, 1, &ScenarioParams { objects: Some(4), ..Default::default() })
            .unwrap();
        let mut colors: Vec<String> = s.world.objects.iter().map(|o| o.color.clone()).collect();
        for ev in &s.spawns {
            if let Entity::Object(o) = &ev.entity {
                colors.push(o.color.clone());
            }
        }
        assert_eq!(colors.len(), 4);
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 4);
        assert_eq!(s.world.goals.len(), 4);
        assert!(s.world.goals.iter().all(|g| matches!(g.subject, EntitySelector::Attr { .. })));
    }

    #[test]
    fn unknown_task_name() {
        assert!(matches!("juggling".parse::<TaskName>(), Err(SimError::UnknownTask(_))));
        assert_eq!("leader_follower".parse::<TaskName>().unwrap(), TaskName::LeaderFollower);
    }

    #[test]
    fn spawn_schedule_applies() {
        let mut s = make_scenario(TaskName::IntruderAttack, 3, &ScenarioParams::default()).unwrap();
        let mut w = s.world.clone();
        let SpawnWhen::AtStep(k) = s.spawns[0].when else { panic!() };
        assert!(s.apply_due_spawns(&mut w, k - 1).is_empty());
        assert_eq!(s.apply_due_spawns(&mut w, k), vec![INTRUDER_ID]);
        assert!(w.object(INTRUDER_ID).is_some());
    }
}
