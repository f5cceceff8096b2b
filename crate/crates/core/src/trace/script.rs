//! Scripted expert demonstrations, one per task.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::assign::min_cost_assignment;
use crate::geometry::{wrap_angle, Pose2D, Shape, Vec2};
use crate::sim::{
    self, check_goal, make_scenario, EntityId, EntitySelector, GoalFrame, GoalSpec, GoalTarget, Scenario,
    ScenarioParams, SimError, TaskName, WheelSpeeds, WorldState, DEFAULT_DT, V_MAX, WHEEL_BASE,
};
use crate::skills::{mix, pd_control, route_point, PdError, PdGains, SkillKind, SkillRunner};

use super::{DemoTrace, Frame};

/// Distance a follower keeps behind its predecessor.
pub const FOLLOW_GAP: f64 = 0.09;
/// Center distance of encircling robots from the intruder.
pub const ENCIRCLE_RADIUS: f64 = 0.065;
pub const CONTACT_GAP: f64 = 0.002;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    /// Uniform position noise amplitude in meters (0 disables).
    pub noise: f64,
    pub max_steps: usize,
    /// Idle frames recorded after the task is complete.
    pub tail: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self { noise: 0.0, max_steps: 2000, tail: 8 }
    }
}

pub fn script_demo(task: TaskName, seed: u64, params: &ScenarioParams) -> Result<DemoTrace, SimError> {
    script_demo_with(task, seed, params, &DemoOptions::default())
}

pub fn script_demo_with(
    task: TaskName,
    seed: u64,
    params: &ScenarioParams,
    opts: &DemoOptions,
) -> Result<DemoTrace, SimError> {
    let scenario = make_scenario(task, seed, params)?;
    let mut rec = Recorder::new(scenario, opts.max_steps);
    match task {
        TaskName::IntruderAttack => intruder(&mut rec)?,
        TaskName::LeaderFollower => leader_follower(&mut rec)?,
        TaskName::ObjectTransport => transport(&mut rec)?,
        TaskName::ObjectRotate => rotate(&mut rec)?,
        TaskName::ColorSorting => sorting(&mut rec)?,
    }
    rec.hold(opts.tail)?;
    if task == TaskName::ObjectTransport {
        annotate_transport(&mut rec);
    }
    let trace = DemoTrace { task_name: task.to_string(), dt: DEFAULT_DT, frames: rec.frames };
    Ok(if opts.noise > 0.0 { trace.with_position_noise(opts.noise, seed ^ 0x5eed) } else { trace })
}

struct Recorder {
    scenario: Scenario,
    world: WorldState,
    frames: Vec<Frame>,
    step: u64,
    max_steps: usize,
}

impl Recorder {
    fn new(mut scenario: Scenario, max_steps: usize) -> Self {
        let mut world = scenario.world.clone();
        scenario.apply_due_spawns(&mut world, 0);
        let frames = vec![Frame::from_world(0, &world)];
        Self { scenario, world, frames, step: 0, max_steps }
    }

    fn out_of_steps(&self) -> bool {
        self.frames.len() > self.max_steps
    }

    fn advance(&mut self, actions: &BTreeMap<EntityId, WheelSpeeds>) -> Result<(), SimError> {
        self.world = sim::step(&self.world, actions, DEFAULT_DT)?;
        self.step += 1;
        self.scenario.apply_due_spawns(&mut self.world, self.step);
        self.frames.push(Frame::from_world(self.frames.len(), &self.world));
        Ok(())
    }

    fn hold(&mut self, n: usize) -> Result<(), SimError> {
        for _ in 0..n {
            self.advance(&BTreeMap::new())?;
        }
        Ok(())
    }

    /// Runs one skill runner per robot in lockstep until all finish.
    fn run_all(&mut self, runners: &mut [SkillRunner]) -> Result<bool, SimError> {
        loop {
            let mut actions = BTreeMap::new();
            let mut finished = true;
            let mut failed = false;
            for r in runners.iter_mut() {
                let cmd = r.command(&self.world);
                if cmd.failed.is_some() {
                    failed = true;
                }
                if !cmd.done {
                    finished = false;
                }
                actions.insert(cmd.robot_id, cmd.wheel_speeds);
            }
            if finished {
                return Ok(true);
            }
            if failed || self.out_of_steps() {
                return Ok(false);
            }
            self.advance(&actions)?;
        }
    }
}

/// Point tracker that stops inside a tolerance.
#[derive(Default)]
struct Tracker {
    prev: BTreeMap<EntityId, PdError>,
}

impl Tracker {
    fn goto(&mut self, world: &WorldState, robot: EntityId, point: Vec2, tol: f64) -> (WheelSpeeds, bool) {
        let Some(r) = world.robot(robot) else { return (WheelSpeeds::STOP, true) };
        if (r.pose.position() - point).norm() <= tol {
            self.prev.remove(&robot);
            return (WheelSpeeds::STOP, true);
        }
        let aim = route_point(world, r.pose.position(), point);
        let (w, e) = pd_control(&r.pose, aim, self.prev.get(&robot).copied(), &PdGains::default(), DEFAULT_DT);
        self.prev.insert(robot, e);
        (w, false)
    }
}

fn intruder(rec: &mut Recorder) -> Result<(), SimError> {
    let intruder = loop {
        if let Some(o) = rec.world.objects.first() {
            break o.id;
        }
        if rec.out_of_steps() {
            return Ok(());
        }
        rec.hold(1)?;
    };
    let robots = rec.world.robot_ids();
    let k = robots.len();
    let c = rec.world.object(intruder).map(|o| o.pose.position()).unwrap_or_default();
    let slots: Vec<Vec2> =
        (0..k).map(|i| c + Vec2::from_angle(PI + 2.0 * PI * i as f64 / k as f64) * ENCIRCLE_RADIUS).collect();
    let cost: Vec<Vec<f64>> = robots
        .iter()
        .map(|id| {
            let p = rec.world.robot(*id).map(|r| r.pose.position()).unwrap_or_default();
            slots.iter().map(|s| (p - *s).norm()).collect()
        })
        .collect();
    let perm = min_cost_assignment(&cost);
    let mut tracker = Tracker::default();
    while !rec.out_of_steps() {
        let mut actions = BTreeMap::new();
        let mut all = true;
        for (i, id) in robots.iter().enumerate() {
            let (w, ok) = tracker.goto(&rec.world, *id, slots[perm[i]], 0.003);
            all &= ok;
            actions.insert(*id, w);
        }
        if all {
            break;
        }
        rec.advance(&actions)?;
    }
    Ok(())
}

/// Follower order: each next follower is the nearest remaining robot to the
/// current chain tail.
fn follow_chain(world: &WorldState, leader: EntityId) -> Vec<EntityId> {
    let mut chain = vec![leader];
    let mut rest: Vec<EntityId> = world.robot_ids().into_iter().filter(|id| *id != leader).collect();
    while !rest.is_empty() {
        let tail = world.robot(*chain.last().unwrap()).map(|r| r.pose.position()).unwrap_or_default();
        let (i, _) = rest
            .iter()
            .enumerate()
            .map(|(i, id)| (i, world.robot(*id).map(|r| (r.pose.position() - tail).norm()).unwrap_or(f64::MAX)))
            .fold((0, f64::MAX), |best, cur| if cur.1 < best.1 { cur } else { best });
        chain.push(rest.remove(i));
    }
    chain
}

fn slot_behind(world: &WorldState, id: EntityId) -> Vec2 {
    world.robot(id).map(|r| r.pose.transform_point(Vec2::new(-FOLLOW_GAP, 0.0))).unwrap_or_default()
}

/// True when every robot other than `leader` sits within `tol` of the slot
/// behind some predecessor, forming a single chain from the leader.
pub fn follow_zone_ok(world: &WorldState, leader: EntityId, tol: f64) -> bool {
    let mut tail = leader;
    let mut rest: Vec<EntityId> = world.robot_ids().into_iter().filter(|id| *id != leader).collect();
    while !rest.is_empty() {
        let slot = slot_behind(world, tail);
        let Some((i, d)) = rest
            .iter()
            .enumerate()
            .filter_map(|(i, id)| world.robot(*id).map(|r| (i, (r.pose.position() - slot).norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return false;
        };
        if d > tol {
            return false;
        }
        tail = rest.remove(i);
    }
    true
}

fn leader_follower(rec: &mut Recorder) -> Result<(), SimError> {
    let leader = EntityId(1);
    let chain = follow_chain(&rec.world, leader);
    let mut tracker = Tracker::default();
    let mut settled = 0;
    while !rec.out_of_steps() && settled < 3 {
        let mut actions = BTreeMap::new();
        let (w, mut all) = tracker.goto(&rec.world, leader, sim::scenario::LEADER_DESTINATION, 0.004);
        actions.insert(leader, w);
        for pair in chain.windows(2) {
            let slot = slot_behind(&rec.world, pair[0]);
            let (w, ok) = tracker.goto(&rec.world, pair[1], slot, 0.004);
            all &= ok;
            actions.insert(pair[1], w);
        }
        settled = if all { settled + 1 } else { 0 };
        rec.advance(&actions)?;
    }
    Ok(())
}

/// Slot just behind `object` on the side away from `toward`, expressed in
/// the object-toward-goal frame.
pub(crate) fn push_slot(robot: EntityId, object: EntityId, toward: Vec2, reach: f64, lateral: f64) -> GoalSpec {
    GoalSpec {
        subject: EntitySelector::Id(robot),
        target: GoalTarget::Pose(Pose2D::new(-reach, lateral, 0.0)),
        frame: GoalFrame::TowardPoint { anchor: object, toward },
        pos_tol: 0.01,
        ang_tol: 0.1,
        require_angle: false,
    }
}

fn object_radius(world: &WorldState, id: EntityId) -> f64 {
    world.object(id).map(|o| o.shape.bounding_radius()).unwrap_or(0.0)
}

/// Quasi-static push steering: head along the contact normal, tilted so the
/// robot slides around the object until the normal points at the goal.
pub(crate) fn push_command(world: &WorldState, robot: EntityId, object: EntityId, goal: Vec2) -> Option<WheelSpeeds> {
    let r = world.robot(robot)?;
    let o = world.object(object)?.pose.position();
    let to_goal = goal - o;
    let dist = to_goal.norm();
    let m = (o - r.pose.position()).normalized()?;
    let beta = wrap_angle(m.angle() - to_goal.angle());
    if beta.abs() > 1.2 {
        return None;
    }
    let desired = m.angle() + (2.0 * beta).clamp(-0.8, 0.8);
    let err = wrap_angle(desired - r.pose.theta);
    let speed = (1.5 * dist + 0.01).min(V_MAX);
    let linear = if err.abs() > 0.6 { 0.0 } else { speed * err.cos() };
    Some(mix(linear, 4.0 * err, WHEEL_BASE, V_MAX))
}

/// Moves `object` to `goal` with the given robots: slot approach, contact,
/// then push until within `tol`.
fn push_to(rec: &mut Recorder, robots: &[EntityId], object: EntityId, goal: Vec2, tol: f64) -> Result<bool, SimError> {
    for _attempt in 0..4 {
        let reach = object_radius(&rec.world, object) + crate::sim::ROBOT_RADIUS + CONTACT_GAP;
        let k = robots.len();
        let mut runners: Vec<SkillRunner> = robots
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let lateral = if k == 1 { 0.0 } else { (i as f64 - 0.5 * (k - 1) as f64) * 0.05 };
                let reach = (reach * reach - lateral * lateral).max(0.0).sqrt();
                SkillRunner::new(SkillKind::MoveToContact, *id, object, PdGains::default(), 600)
                    .with_slot(push_slot(*id, object, goal, reach, lateral))
            })
            .collect();
        if !rec.run_all(&mut runners)? {
            return Ok(false);
        }
        loop {
            let o = rec.world.object(object).map(|o| o.pose.position()).unwrap_or(goal);
            if (o - goal).norm() <= tol {
                return Ok(true);
            }
            if rec.out_of_steps() {
                return Ok(false);
            }
            let mut actions = BTreeMap::new();
            let mut lost = false;
            for id in robots {
                match push_command(&rec.world, *id, object, goal) {
                    Some(w) => {
                        actions.insert(*id, w);
                    }
                    None => lost = true,
                }
            }
            if lost {
                break;
            }
            rec.advance(&actions)?;
        }
    }
    Ok(false)
}

fn transport(rec: &mut Recorder) -> Result<(), SimError> {
    let Some(goal) = rec.world.goals.first().cloned() else { return Ok(()) };
    let EntitySelector::Id(object) = goal.subject else { return Ok(()) };
    let robots = rec.world.robot_ids();
    push_to(rec, &robots, object, goal.target.position(), 0.01)?;
    Ok(())
}

fn annotate_transport(rec: &mut Recorder) {
    let Some(goal) = rec.scenario.world.goals.first().cloned() else { return };
    for f in &mut rec.frames {
        let w = f.to_world(rec.world.arena);
        let ok = check_goal(&w, &goal).map(|c| c.position_error <= 0.5 * goal.pos_tol).unwrap_or(false);
        f.label = Some(ok);
    }
}

fn rotate(rec: &mut Recorder) -> Result<(), SimError> {
    let Some(goal) = rec.world.goals.first().cloned() else { return Ok(()) };
    let EntitySelector::Id(object) = goal.subject else { return Ok(()) };
    let GoalTarget::Pose(target) = goal.target else { return Ok(()) };
    let Some(obj) = rec.world.object(object).cloned() else { return Ok(()) };
    let Shape::Rectangle { width, height } = obj.shape else { return Ok(()) };
    let robots = rec.world.robot_ids();
    let off = crate::sim::ROBOT_RADIUS + 0.5 * height + CONTACT_GAP;
    // Contacts sit on the corners whose sliding drift points inward for the
    // chosen direction of rotation.
    let dir = wrap_angle(target.theta - obj.pose.theta).signum();
    let locals = [Vec2::new(0.4 * width, dir * off), Vec2::new(-0.4 * width, -dir * off)];
    let cost: Vec<Vec<f64>> = robots
        .iter()
        .take(2)
        .map(|id| {
            let p = rec.world.robot(*id).map(|r| r.pose.position()).unwrap_or_default();
            locals.iter().map(|l| (p - obj.pose.transform_point(*l)).norm()).collect()
        })
        .collect();
    let perm = min_cost_assignment(&cost);
    let pair: Vec<EntityId> = robots.iter().take(2).copied().collect();
    let half_diag = 0.5 * width.hypot(height);
    for _attempt in 0..6 {
        let mut runners: Vec<SkillRunner> = pair
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let l = locals[perm[i]];
                let slot = GoalSpec {
                    subject: EntitySelector::Id(*id),
                    target: GoalTarget::Pose(Pose2D::new(l.x, l.y, 0.0)),
                    frame: GoalFrame::RelativeTo(object),
                    pos_tol: 0.01,
                    ang_tol: 0.1,
                    require_angle: false,
                };
                SkillRunner::new(SkillKind::MoveToContact, *id, object, PdGains::default(), 600).with_slot(slot)
            })
            .collect();
        if !rec.run_all(&mut runners)? {
            return Ok(());
        }
        let mut lost = 0;
        while !rec.out_of_steps() && lost < 2 {
            let Some(o) = rec.world.object(object) else { return Ok(()) };
            let remaining = wrap_angle(target.theta - o.pose.theta);
            if remaining.abs() <= 0.3_f64.to_radians() {
                return Ok(());
            }
            let s = remaining.signum();
            let speed = (remaining.abs() * half_diag * 1.5).clamp(0.002, 0.08);
            let axis = o.pose.heading();
            let c = o.pose.position();
            let mut actions = BTreeMap::new();
            for id in &pair {
                let Some(r) = rec.world.robot(*id) else { continue };
                let ra = r.pose.position() - c;
                let along = ra.perp() * s;
                let edge = if along.dot(axis) >= 0.0 { axis } else { -axis };
                let inward = if ra.dot(axis.perp()) >= 0.0 { -axis.perp() } else { axis.perp() };
                let dir = edge + inward * 0.08;
                let err = wrap_angle(dir.angle() - r.pose.theta);
                let linear = if err.abs() > 0.5 { 0.0 } else { speed * err.cos() };
                actions.insert(*id, mix(linear, 4.0 * err, WHEEL_BASE, V_MAX));
            }
            rec.advance(&actions)?;
            let touching = pair.iter().all(|id| sim::robot_in_contact(&rec.world, *id, object));
            lost = if touching { 0 } else { lost + 1 };
        }
    }
    Ok(())
}

/// The present object not yet inside the region of its color, if any.
fn next_unsorted(world: &WorldState) -> Option<(EntityId, Vec2)> {
    for o in &world.objects {
        let goal = world.goals.iter().find(|g| g.subject.matches(&crate::sim::EntityRef::Object(o)))?;
        let done = check_goal(world, goal).map(|c| c.satisfied).unwrap_or(false);
        if !done {
            return Some((o.id, goal.target.position()));
        }
    }
    None
}

fn sorting(rec: &mut Recorder) -> Result<(), SimError> {
    let robot = EntityId(1);
    let mut last: Option<EntityId> = None;
    while !rec.out_of_steps() {
        let Some((object, bin)) = next_unsorted(&rec.world) else {
            if rec.scenario.pending_spawns() == 0 {
                break;
            }
            rec.hold(1)?;
            continue;
        };
        if let Some(prev) = last {
            let mut back = [SkillRunner::new(SkillKind::DetachContact, robot, prev, PdGains::default(), 50)];
            rec.run_all(&mut back)?;
            let mut away = [SkillRunner::new(SkillKind::Retreat { clear_radius: 0.05 }, robot, prev, PdGains::default(), 100)];
            rec.run_all(&mut away)?;
        }
        if !push_to(rec, &[robot], object, bin, 0.02)? {
            break;
        }
        last = Some(object);
        // The next object spawns once this one is in its region.
        rec.hold(1)?;
    }
    if let Some(prev) = last {
        let mut back = [SkillRunner::new(SkillKind::DetachContact, robot, prev, PdGains::default(), 50)];
        rec.run_all(&mut back)?;
        let mut away = [SkillRunner::new(SkillKind::Retreat { clear_radius: 0.05 }, robot, prev, PdGains::default(), 100)];
        rec.run_all(&mut away)?;
    }
    Ok(())
}
