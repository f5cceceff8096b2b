//! A priori skills: PD go-to-point control and the four closed-loop
//! behaviors built on it.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose2D, Vec2};
use crate::sim::{
    self, robot_in_contact, world_target, EntityId, GoalSpec, WheelSpeeds, WorldState, DEFAULT_DT,
    ROBOT_RADIUS, V_MAX, WHEEL_BASE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub k_p_lin: f64,
    pub k_d_lin: f64,
    pub k_p_ang: f64,
    pub k_d_ang: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { k_p_lin: 1.2, k_d_lin: 0.1, k_p_ang: 2.5, k_d_ang: 0.15 }
    }
}

impl PdGains {
    pub fn is_valid(&self) -> bool {
        let all = [self.k_p_lin, self.k_d_lin, self.k_p_ang, self.k_d_ang];
        all.iter().all(|g| g.is_finite() && *g >= 0.0) && (self.k_p_lin > 0.0 || self.k_p_ang > 0.0)
    }
}

/// Error terms remembered between control ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PdError {
    pub distance: f64,
    pub heading: f64,
}

/// Mixes a body twist into wheel speeds, scaling both wheels down together
/// when either would exceed `v_max`.
pub fn mix(linear: f64, angular: f64, wheel_base: f64, v_max: f64) -> WheelSpeeds {
    let half = 0.5 * angular * wheel_base;
    let (l, r) = (linear - half, linear + half);
    let peak = l.abs().max(r.abs());
    if peak > v_max {
        let s = v_max / peak;
        WheelSpeeds::new(l * s, r * s)
    } else {
        WheelSpeeds::new(l, r)
    }
}

/// One PD tick toward `target`. Returns the wheel command and the error to
/// feed back on the next tick.
pub fn pd_control(
    current: &Pose2D,
    target: Vec2,
    prev: Option<PdError>,
    gains: &PdGains,
    dt: f64,
) -> (WheelSpeeds, PdError) {
    let delta = target - current.position();
    let distance = delta.norm();
    let heading = if distance > 1e-9 { wrap_angle(delta.angle() - current.theta) } else { 0.0 };
    let err = PdError { distance, heading };
    let (d_dist, d_head) = match prev {
        Some(p) if dt > 0.0 => ((distance - p.distance) / dt, wrap_angle(heading - p.heading) / dt),
        _ => (0.0, 0.0),
    };
    let angular = gains.k_p_ang * heading + gains.k_d_ang * d_head;
    let linear = if heading.abs() > FRAC_PI_2 {
        0.0
    } else {
        ((gains.k_p_lin * distance + gains.k_d_lin * d_dist) * heading.cos()).max(0.0)
    };
    (mix(linear, angular, WHEEL_BASE, V_MAX), err)
}

/// Drives backwards toward `target`: control the mirrored pose, then swap
/// and negate the wheels.
pub fn pd_control_reverse(
    current: &Pose2D,
    target: Vec2,
    prev: Option<PdError>,
    gains: &PdGains,
    dt: f64,
) -> (WheelSpeeds, PdError) {
    let mirrored = Pose2D::new(current.x, current.y, current.theta + PI);
    let (w, e) = pd_control(&mirrored, target, prev, gains, dt);
    (WheelSpeeds::new(-w.right, -w.left), e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SkillKind {
    Approach { zone_radius: f64 },
    MoveToContact,
    DetachContact,
    Retreat { clear_radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCommand {
    pub robot_id: EntityId,
    pub wheel_speeds: WheelSpeeds,
    pub done: bool,
    pub failed: Option<String>,
}

const ORBIT_MARGIN: f64 = 0.015;
const ORBIT_STEP: f64 = 0.7;
const STANDOFF: f64 = 0.03;

/// Next point to steer at on the way to `target`, detouring around the first
/// object that blocks the straight line.
pub fn route_point(world: &WorldState, from: Vec2, target: Vec2) -> Vec2 {
    let seg = target - from;
    let len2 = seg.dot(seg);
    if len2 < 1e-12 {
        return target;
    }
    let mut first: Option<(f64, Vec2, f64)> = None;
    for o in &world.objects {
        let c = o.pose.position();
        let radius = o.shape.bounding_radius() + ROBOT_RADIUS + ORBIT_MARGIN;
        let s = ((c - from).dot(seg) / len2).clamp(0.0, 1.0);
        if s <= 0.0 {
            continue;
        }
        let closest = from + seg * s;
        if (closest - c).norm() >= radius - 0.005 {
            continue;
        }
        let diff = wrap_angle((target - c).angle() - (from - c).angle());
        if diff.abs() < 0.35 {
            continue;
        }
        if first.is_none_or(|(fs, _, _)| s < fs) {
            first = Some((s, c, radius));
        }
    }
    let Some((_, c, radius)) = first else { return target };
    let a_from = (from - c).angle();
    let diff = wrap_angle((target - c).angle() - a_from);
    let step = diff.signum() * diff.abs().min(ORBIT_STEP);
    c + Vec2::from_angle(a_from + step) * radius.max((from - c).norm().min(radius + 0.05))
}

/// Where a robot's center sits when touching `entity` from its current side.
fn contact_point(world: &WorldState, robot: EntityId, entity: EntityId) -> Option<Vec2> {
    let r = world.robot(robot)?;
    let e = world.entity(entity)?;
    let body = e.body();
    let p = r.pose.position();
    let on = body.closest_boundary_point(p);
    let n = body.outward_normal_toward(p);
    Some(on + n * r.body_radius)
}

fn boundary_gap(world: &WorldState, robot: EntityId, entity: EntityId) -> Option<f64> {
    let r = world.entity(robot)?;
    let e = world.entity(entity)?;
    Some(r.body().boundary_distance(&e.body()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Standoff,
    Close,
}

/// Closed-loop controller for one robot executing one skill.
#[derive(Debug, Clone)]
pub struct SkillRunner {
    pub kind: SkillKind,
    pub robot: EntityId,
    pub target: EntityId,
    /// Optional goal for the robot itself; Approach drives to it and
    /// MoveToContact touches the target from its side.
    pub slot: Option<GoalSpec>,
    pub gains: PdGains,
    pub budget: u64,
    pub dt: f64,
    steps: u64,
    prev: Option<PdError>,
    phase: Phase,
}

impl SkillRunner {
    pub fn new(kind: SkillKind, robot: EntityId, target: EntityId, gains: PdGains, budget: u64) -> Self {
        Self {
            kind,
            robot,
            target,
            slot: None,
            gains,
            budget,
            dt: DEFAULT_DT,
            steps: 0,
            prev: None,
            phase: Phase::Standoff,
        }
    }

    pub fn with_slot(mut self, slot: GoalSpec) -> Self {
        self.slot = Some(slot);
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reset(&mut self) {
        self.steps = 0;
        self.prev = None;
        self.phase = Phase::Standoff;
    }

    fn slot_point(&self, world: &WorldState) -> Option<Vec2> {
        let g = self.slot.as_ref()?;
        world_target(world, g).ok().map(|t| t.position())
    }

    /// Termination predicate evaluated on `world`.
    pub fn is_done(&self, world: &WorldState) -> bool {
        let Some(r) = world.robot(self.robot) else { return false };
        match self.kind {
            SkillKind::Approach { zone_radius } => match self.slot_point(world) {
                Some(p) => (r.pose.position() - p).norm() <= zone_radius,
                None => boundary_gap(world, self.robot, self.target).is_some_and(|g| g <= zone_radius),
            },
            SkillKind::MoveToContact => robot_in_contact(world, self.robot, self.target),
            SkillKind::DetachContact => {
                world.entity(self.target).is_some() && !robot_in_contact(world, self.robot, self.target)
            }
            SkillKind::Retreat { clear_radius } => {
                boundary_gap(world, self.robot, self.target).is_some_and(|g| g >= clear_radius)
            }
        }
    }

    /// Produces the next command for the current world.
    pub fn command(&mut self, world: &WorldState) -> SkillCommand {
        let robot_id = self.robot;
        let stop = |done: bool, failed: Option<String>| SkillCommand {
            robot_id,
            wheel_speeds: WheelSpeeds::STOP,
            done,
            failed,
        };
        let Some(robot) = world.robot(self.robot) else {
            return stop(false, Some("robot_lost".into()));
        };
        if world.entity(self.target).is_none() {
            return stop(false, Some("target_lost".into()));
        }
        if self.is_done(world) {
            return stop(true, None);
        }
        if self.steps >= self.budget {
            return stop(false, Some("budget".into()));
        }
        self.steps += 1;
        let pose = robot.pose;
        let here = pose.position();
        let center = world.entity(self.target).map(|e| e.pose().position()).unwrap_or(here);
        let (speeds, err) = match self.kind {
            SkillKind::Approach { .. } => {
                let goal = self.slot_point(world).unwrap_or(center);
                let aim = route_point(world, here, goal);
                pd_control(&pose, aim, self.prev, &self.gains, self.dt)
            }
            SkillKind::MoveToContact => {
                if self.phase == Phase::Standoff {
                    match self.slot_point(world) {
                        Some(slot) => {
                            let out = (slot - center).normalized().unwrap_or(Vec2::new(-1.0, 0.0));
                            let standoff = slot + out * STANDOFF;
                            if (here - standoff).norm() <= 0.012 {
                                self.phase = Phase::Close;
                                self.prev = None;
                            }
                        }
                        None => self.phase = Phase::Close,
                    }
                }
                match self.phase {
                    Phase::Standoff => {
                        let slot = self.slot_point(world).unwrap_or(center);
                        let out = (slot - center).normalized().unwrap_or(Vec2::new(-1.0, 0.0));
                        let aim = route_point(world, here, slot + out * STANDOFF);
                        pd_control(&pose, aim, self.prev, &self.gains, self.dt)
                    }
                    Phase::Close => {
                        let body = world.entity(self.target).map(|e| e.body());
                        let n = body.map(|b| b.outward_normal_toward(here)).unwrap_or(-pose.heading());
                        let touch = contact_point(world, self.robot, self.target).unwrap_or(center);
                        // Aim slightly past the touch point so the gap closes in finite time.
                        let aim = touch - n * 0.004;
                        let inward = (-n).angle();
                        let facing = wrap_angle(inward - pose.theta);
                        if facing.abs() > 0.35 {
                            (mix(0.0, self.gains.k_p_ang * facing, WHEEL_BASE, V_MAX), PdError::default())
                        } else {
                            pd_control(&pose, aim, self.prev, &self.gains, self.dt)
                        }
                    }
                }
            }
            SkillKind::DetachContact | SkillKind::Retreat { .. } => {
                let away = (here - center).normalized().unwrap_or(-pose.heading());
                let dist = match self.kind {
                    SkillKind::Retreat { clear_radius } => {
                        let gap = boundary_gap(world, self.robot, self.target).unwrap_or(0.0);
                        (clear_radius - gap).max(0.0) + 0.02
                    }
                    _ => 0.03,
                };
                let aim = here + away * dist;
                let facing = wrap_angle(away.angle() - pose.theta);
                if facing.abs() > FRAC_PI_2 {
                    pd_control_reverse(&pose, aim, self.prev, &self.gains, self.dt)
                } else {
                    pd_control(&pose, aim, self.prev, &self.gains, self.dt)
                }
            }
        };
        self.prev = Some(err);
        SkillCommand { robot_id, wheel_speeds: speeds.clamped(V_MAX), done: false, failed: None }
    }
}

/// Runs a single skill to completion in a private copy of `world`.
/// The returned stream ends with a `done` or `failed` command.
pub fn run_skill(
    kind: SkillKind,
    robot: EntityId,
    target: EntityId,
    world: &WorldState,
    gains: &PdGains,
    budget: u64,
) -> (Vec<SkillCommand>, WorldState) {
    let mut runner = SkillRunner::new(kind, robot, target, *gains, budget);
    let mut w = world.clone();
    let mut out = Vec::new();
    loop {
        let cmd = runner.command(&w);
        let finished = cmd.done || cmd.failed.is_some();
        let speeds = cmd.wheel_speeds;
        out.push(cmd);
        if finished {
            break;
        }
        let actions = BTreeMap::from([(robot, speeds)]);
        match sim::step(&w, &actions, runner.dt) {
            Ok(next) => w = next,
            Err(e) => {
                out.push(SkillCommand {
                    robot_id: robot,
                    wheel_speeds: WheelSpeeds::STOP,
                    done: false,
                    failed: Some(e.to_string()),
                });
                break;
            }
        }
    }
    (out, w)
}
