//! Labelled segment corpus produced by running each primitive skill (and
//! scripted pushes) from randomized geometry.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2D, Shape, Vec2};
use crate::perception::Thresholds;
use crate::sim::{
    self, Arena, EntityId, EntitySelector, GoalFrame, GoalSpec, GoalTarget, ObjectState, RobotState, WheelSpeeds,
    WorldState, ROBOT_RADIUS,
};
use crate::skills::{PdGains, SkillKind, SkillRunner};
use crate::trace::script::push_command;
use crate::trace::{DemoTrace, Frame};

use super::segment::{describe_segment, rule_label};
use super::tree::family;
use super::{SegmentDescriptor, SkillClass};

const FOCAL: EntityId = EntityId(1);
const OTHER: EntityId = EntityId(2);
const OBJECT: EntityId = EntityId(101);
const SECOND_OBJECT: EntityId = EntityId(102);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_class: BTreeMap<String, usize>,
    /// Runs discarded because the recorded segment did not show the skill.
    pub dropped: usize,
}

fn classes() -> Vec<SkillClass> {
    vec![
        SkillClass::Idle,
        SkillClass::Approach,
        SkillClass::MoveToContact,
        SkillClass::DetachContact,
        SkillClass::Retreat,
        SkillClass::LearnedSkill("push".into()),
    ]
}

struct Scene {
    world: WorldState,
    has_other: bool,
}

fn inside(p: Vec2, margin: f64) -> bool {
    p.x >= margin && p.x <= sim::ARENA_WIDTH - margin && p.y >= margin && p.y <= sim::ARENA_HEIGHT - margin
}

/// Object plus the focal robot at a boundary gap drawn from `gaps`;
/// `None` when the random placement is not usable.
fn scene(rng: &mut ChaCha8Rng, gaps: std::ops::Range<f64>, disk_only: bool) -> Option<Scene> {
    let gap = rng.random_range(gaps);
    let mut w = WorldState::empty(Arena::default());
    let shape = if disk_only || rng.random_bool(0.75) {
        Shape::Circle { radius: rng.random_range(0.03..0.05) }
    } else {
        Shape::Rectangle { width: rng.random_range(0.06..0.16), height: rng.random_range(0.04..0.06) }
    };
    let o = Pose2D::new(rng.random_range(0.3..1.2), rng.random_range(0.25..0.75), rng.random_range(-PI..PI));
    w.objects.push(ObjectState { id: OBJECT, pose: o, shape, color: "red".into(), movable: true, required_pushers: 1 });
    let dir = Vec2::from_angle(rng.random_range(-PI..PI));
    let body = w.objects[0].body();
    // walk outward until the boundary gap matches
    let mut d = 0.0;
    while body.signed_distance_to_point(o.position() + dir * d) < gap + ROBOT_RADIUS {
        d += 0.0005;
    }
    let rp = o.position() + dir * d;
    let face = (-dir).angle() + rng.random_range(-0.6..0.6);
    w.robots.push(RobotState::new(FOCAL, Pose2D::new(rp.x, rp.y, face)));
    if !inside(rp, 0.05) {
        return None;
    }
    if rng.random_bool(0.4) {
        let p = Vec2::new(rng.random_range(0.1..1.4), rng.random_range(0.1..0.9));
        let b = Shape::Circle { radius: 0.035 };
        let far = (p - o.position()).norm() > 0.2 && (p - rp).norm() > 0.2;
        if far {
            w.objects.push(ObjectState {
                id: SECOND_OBJECT,
                pose: Pose2D::new(p.x, p.y, 0.0),
                shape: b,
                color: "blue".into(),
                movable: true,
                required_pushers: 1,
            });
        }
    }
    let mut has_other = false;
    if rng.random_bool(0.5) {
        let p = Vec2::new(rng.random_range(0.1..1.4), rng.random_range(0.1..0.9));
        let clear = w.objects.iter().all(|x| x.body().signed_distance_to_point(p) > 0.08) && (p - rp).norm() > 0.09;
        if clear {
            w.robots.push(RobotState::new(OTHER, Pose2D::new(p.x, p.y, rng.random_range(-PI..PI))));
            has_other = true;
        }
    }
    Some(Scene { world: w, has_other })
}

struct Run {
    frames: Vec<Frame>,
    world: WorldState,
}

impl Run {
    fn new(world: WorldState) -> Self {
        Self { frames: vec![Frame::from_world(0, &world)], world }
    }

    fn step(&mut self, actions: &BTreeMap<EntityId, WheelSpeeds>) -> bool {
        match sim::step(&self.world, actions, sim::DEFAULT_DT) {
            Ok(w) => {
                self.world = w;
                self.frames.push(Frame::from_world(self.frames.len(), &self.world));
                true
            }
            Err(_) => false,
        }
    }

    fn trace(self) -> DemoTrace {
        DemoTrace { task_name: "corpus".into(), dt: sim::DEFAULT_DT, frames: self.frames }
    }
}

/// Runs `runner` for at most `steps`, optionally wandering the other robot.
fn drive(run: &mut Run, mut runner: SkillRunner, steps: usize, other: Option<WheelSpeeds>) -> bool {
    for _ in 0..steps {
        let cmd = runner.command(&run.world);
        if cmd.failed.is_some() {
            return false;
        }
        if cmd.done {
            break;
        }
        let mut a = BTreeMap::from([(FOCAL, cmd.wheel_speeds)]);
        if let Some(o) = other {
            a.insert(OTHER, o);
        }
        if !run.step(&a) {
            return false;
        }
    }
    true
}

fn sample(class: &SkillClass, rng: &mut ChaCha8Rng) -> Option<DemoTrace> {
    let gains = PdGains::default();
    let wander = |rng: &mut ChaCha8Rng, has: bool| {
        (has && rng.random_bool(0.5)).then(|| WheelSpeeds::new(rng.random_range(0.0..0.08), rng.random_range(0.0..0.08)))
    };
    match class {
        SkillClass::Idle => {
            let gaps = if rng.random_bool(0.3) { 0.0..0.004 } else { 0.01..0.3 };
            let sc = scene(rng, gaps, false)?;
            let other = wander(rng, sc.has_other);
            let mut run = Run::new(sc.world);
            for _ in 0..rng.random_range(3..30) {
                let a = other.map(|o| BTreeMap::from([(OTHER, o)])).unwrap_or_default();
                if !run.step(&a) {
                    return None;
                }
            }
            Some(run.trace())
        }
        SkillClass::Approach => {
            let sc = scene(rng, 0.15..0.4, false)?;
            let other = wander(rng, sc.has_other);
            let zone = rng.random_range(0.05..0.12);
            let pick = rng.random_range(0..3);
            let (target, slot) = match pick {
                1 if sc.has_other => (OTHER, None),
                2 => {
                    let p = Vec2::new(rng.random_range(0.1..1.4), rng.random_range(0.1..0.9));
                    let g = GoalSpec {
                        subject: EntitySelector::Id(FOCAL),
                        target: GoalTarget::Pose(Pose2D::new(p.x, p.y, 0.0)),
                        frame: GoalFrame::Absolute,
                        pos_tol: 0.03,
                        ang_tol: 0.1,
                        require_angle: false,
                    };
                    (OBJECT, Some(g))
                }
                _ => (OBJECT, None),
            };
            let mut runner = SkillRunner::new(SkillKind::Approach { zone_radius: zone }, FOCAL, target, gains, 400);
            if let Some(g) = slot {
                runner = runner.with_slot(g);
            }
            let mut run = Run::new(sc.world);
            let steps = rng.random_range(4..40);
            drive(&mut run, runner, steps, other).then(|| run.trace())
        }
        SkillClass::MoveToContact => {
            let sc = scene(rng, 0.03..0.3, false)?;
            let other = wander(rng, sc.has_other);
            let runner = SkillRunner::new(SkillKind::MoveToContact, FOCAL, OBJECT, gains, 300);
            let mut run = Run::new(sc.world);
            drive(&mut run, runner, 300, other).then(|| run.trace())
        }
        SkillClass::DetachContact => {
            let sc = scene(rng, 0.0..0.004, false)?;
            let other = wander(rng, sc.has_other);
            let runner = SkillRunner::new(SkillKind::DetachContact, FOCAL, OBJECT, gains, 60);
            let mut run = Run::new(sc.world);
            drive(&mut run, runner, 60, other).then(|| run.trace())
        }
        SkillClass::Retreat => {
            let sc = scene(rng, 0.006..0.03, false)?;
            let other = wander(rng, sc.has_other);
            let clear = rng.random_range(0.06..0.15);
            let runner = SkillRunner::new(SkillKind::Retreat { clear_radius: clear }, FOCAL, OBJECT, gains, 100);
            let mut run = Run::new(sc.world);
            let steps = rng.random_range(3..30);
            drive(&mut run, runner, steps, other).then(|| run.trace())
        }
        SkillClass::LearnedSkill(_) => {
            let sc = scene(rng, 0.0..0.003, true)?;
            let other = wander(rng, sc.has_other);
            let o = sc.world.objects[0].pose.position();
            let r = sc.world.robots[0].pose.position();
            let ahead = (o - r).normalized()?.rotate(rng.random_range(-0.4..0.4));
            let goal = o + ahead * rng.random_range(0.2..0.5);
            let mut world = sc.world;
            world.robots[0].pose.theta = (o - r).angle();
            let mut run = Run::new(world);
            for _ in 0..rng.random_range(4..30) {
                let Some(w) = push_command(&run.world, FOCAL, OBJECT, goal) else { break };
                let mut a = BTreeMap::from([(FOCAL, w)]);
                if let Some(x) = other {
                    a.insert(OTHER, x);
                }
                if !run.step(&a) {
                    return None;
                }
            }
            Some(run.trace())
        }
    }
}

/// Generates `per_class` samples for every class, keeping only runs whose
/// descriptor actually exhibits the generating skill.
pub fn generate_corpus(seed: u64, per_class: usize) -> (Vec<(SegmentDescriptor, SkillClass)>, CorpusStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = Thresholds::default();
    let mut out = Vec::new();
    let mut stats = CorpusStats::default();
    for class in classes() {
        let mut kept = 0;
        let mut attempts = 0;
        while kept < per_class && attempts < per_class * 20 {
            attempts += 1;
            let Some(trace) = sample(&class, &mut rng) else {
                stats.dropped += 1;
                continue;
            };
            if trace.frames.len() < 2 {
                stats.dropped += 1;
                continue;
            }
            let d = describe_segment(&trace, 0, trace.frames.len(), FOCAL, &th);
            if family(&rule_label(&d)) != family(&class) {
                stats.dropped += 1;
                continue;
            }
            out.push((d, class.clone()));
            kept += 1;
        }
        stats.per_class.insert(family(&class).to_string(), kept);
    }
    (out, stats)
}
