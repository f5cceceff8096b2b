//! Policy execution: role allocation, lockstep skill execution, goal
//! verification and the seeded evaluation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::min_cost_assignment;
use crate::geometry::Vec2;
use crate::inference::{PolicyEntry, SkillClass, TaskPolicy, Trigger};
use crate::sim::{
    self, check_goal, make_scenario, robot_in_contact, world_target, EntityId, EntitySelector, GoalError,
    GoalFrame, GoalSpec, Scenario, ScenarioParams, SimError, TaskName, WheelSpeeds, WorldState,
};
use crate::sim::scenario::{INTRUDER_ID, LEADER_DESTINATION};
use crate::skills::{PdGains, SkillKind, SkillRunner};
use crate::trace::script::{push_command, push_slot};
use crate::trace::follow_zone_ok;
use crate::trace::script::CONTACT_GAP;

/// Encirclement radius around the intruder.
pub const ENCIRCLE_REACH: f64 = 0.10;
pub const FOLLOW_TOL: f64 = 0.04;
pub const LEADER_TOL: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("policy needs {needed} robots, world has {available}")]
    TooFewRobots { needed: usize, available: usize },
    #[error("learned skill `{0}` has no registered controller")]
    UnresolvedSkill(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Goal(#[from] GoalError),
}

/// Closed-loop controller for a learned contact skill.
pub trait LearnedController: Send + Sync {
    /// Wheel speeds for `robots` (same order) pushing `object` toward `goal`.
    fn act(&self, world: &WorldState, robots: &[EntityId], object: EntityId, goal: Vec2) -> Vec<WheelSpeeds>;
}

/// Hand-written quasi-static pushing controller, used as a baseline and in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPush;

impl LearnedController for ScriptedPush {
    fn act(&self, world: &WorldState, robots: &[EntityId], object: EntityId, goal: Vec2) -> Vec<WheelSpeeds> {
        robots
            .iter()
            .map(|r| push_command(world, *r, object, goal).unwrap_or(WheelSpeeds::STOP))
            .collect()
    }
}

#[derive(Clone, Default)]
pub struct SkillRegistry {
    learned: BTreeMap<String, Arc<dyn LearnedController>>,
}

impl std::fmt::Debug for SkillRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SkillRegistry").field("learned", &self.learned.keys().collect::<Vec<_>>()).finish()
    }
}

impl SkillRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, id: &str, c: Arc<dyn LearnedController>) -> Self {
        self.learned.insert(id.to_string(), c);
        self
    }

    pub fn insert(&mut self, id: &str, c: Arc<dyn LearnedController>) {
        self.learned.insert(id.to_string(), c);
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn LearnedController>> {
        self.learned.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.learned.keys()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecConfig {
    /// Total simulator steps per trial.
    pub step_budget: usize,
    /// Steps allowed for one entry attempt.
    pub entry_budget: usize,
    pub trigger_wait: usize,
    /// Steps to wait for an entity an entry refers to.
    pub absent_wait: usize,
    pub entry_retries: usize,
    /// Contact re-acquisitions allowed during one learned-skill attempt.
    pub contact_recoveries: usize,
    /// Consecutive steps without contact that count as losing the object.
    pub contact_loss_steps: usize,
    pub gains: PdGains,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            step_budget: 5000,
            entry_budget: 1200,
            trigger_wait: 100,
            absent_wait: 200,
            entry_retries: 1,
            contact_recoveries: 4,
            contact_loss_steps: 5,
            gains: PdGains::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalResidual {
    pub goal: usize,
    pub position_error: f64,
    pub angle_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub success: bool,
    pub steps_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    pub final_goal_errors: Vec<GoalResidual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub trials: Vec<TrialOutcome>,
    pub success_rate: f64,
}

impl EvalReport {
    pub fn from_trials(task: &str, trials: Vec<TrialOutcome>) -> Self {
        let n = trials.len().max(1);
        let ok = trials.iter().filter(|t| t.success).count();
        Self { task: task.to_string(), success_rate: ok as f64 / n as f64, trials }
    }

    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.success).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Text table with one row per report: task, successes, SR%.
    pub fn table(reports: &[EvalReport]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>8} {:>7}", "task", "success", "SR%");
        for r in reports {
            let _ = writeln!(
                s,
                "{:<18} {:>8} {:>7.1}",
                r.task,
                format!("{}/{}", r.successes(), r.trials.len()),
                100.0 * r.success_rate
            );
        }
        s
    }
}

pub fn verify_goal(world: &WorldState, goal: &GoalSpec) -> Result<bool, GoalError> {
    check_goal(world, goal).map(|c| c.satisfied)
}

/// Every robot within reach of the intruder and no angular gap around it of
/// half a turn or more.
pub fn encircled(world: &WorldState, intruder: EntityId, reach: f64) -> bool {
    let Some(c) = world.entity(intruder).map(|e| e.pose().position()) else { return false };
    if world.robots.is_empty() {
        return false;
    }
    let mut angles = Vec::new();
    for r in &world.robots {
        let d = r.pose.position() - c;
        if d.norm() > reach {
            return false;
        }
        angles.push(d.angle());
    }
    angles.sort_by(f64::total_cmp);
    let n = angles.len();
    (0..n).all(|i| {
        let next = if i + 1 < n { angles[i + 1] } else { angles[0] + std::f64::consts::TAU };
        next - angles[i] < std::f64::consts::PI
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Demo robot role to execution robot.
    pub robots: BTreeMap<EntityId, EntityId>,
    /// Per entry, the execution robots' skills.
    pub entries: Vec<BTreeMap<EntityId, SkillClass>>,
}

/// Maps demo roles to world robots by minimal summed arena-normalized
/// distance between demo start poses and current poses.
pub fn allocate(policy: &TaskPolicy, world: &WorldState) -> Result<Allocation, ExecError> {
    let roles: Vec<(EntityId, Vec2)> = policy.roles.iter().map(|(id, p)| (*id, p.position())).collect();
    let mut robots: Vec<(EntityId, Vec2)> = world.robots.iter().map(|r| (r.id, r.pose.position())).collect();
    robots.sort_by_key(|r| r.0);
    if robots.len() < roles.len() {
        return Err(ExecError::TooFewRobots { needed: roles.len(), available: robots.len() });
    }
    let (w, h) = (world.arena.width, world.arena.height);
    let cost: Vec<Vec<f64>> = roles
        .iter()
        .map(|(_, a)| robots.iter().map(|(_, b)| Vec2::new((a.x - b.x) / w, (a.y - b.y) / h).norm()).collect())
        .collect();
    let perm = if roles.is_empty() { Vec::new() } else { min_cost_assignment(&cost) };
    let map: BTreeMap<EntityId, EntityId> = roles.iter().zip(&perm).map(|((r, _), j)| (*r, robots[*j].0)).collect();
    let entries = policy
        .entries
        .iter()
        .map(|e| e.skills.iter().filter_map(|(r, s)| Some((*map.get(r)?, s.clone()))).collect())
        .collect();
    Ok(Allocation { robots: map, entries })
}

/// Per-step observer: world after the step and the index of the running entry.
pub type Observer<'a> = dyn FnMut(&WorldState, Option<usize>) + 'a;

struct Run<'c, 'o> {
    scenario: Scenario,
    world: WorldState,
    step: usize,
    cfg: &'c ExecConfig,
    observer: Option<&'o mut Observer<'o>>,
    entry: Option<usize>,
}

#[derive(Debug)]
enum Stop {
    Budget,
    Failed(String),
}

impl Run<'_, '_> {
    fn advance(&mut self, actions: &BTreeMap<EntityId, WheelSpeeds>) -> Result<(), Stop> {
        if self.step >= self.cfg.step_budget {
            return Err(Stop::Budget);
        }
        self.world = sim::step(&self.world, actions, sim::DEFAULT_DT).map_err(|e| Stop::Failed(e.to_string()))?;
        self.step += 1;
        self.scenario.apply_due_spawns(&mut self.world, self.step as u64);
        if let Some(obs) = self.observer.as_mut() {
            obs(&self.world, self.entry);
        }
        Ok(())
    }
}

/// Demo entity id to live entity id.
#[derive(Debug, Clone, Default)]
struct Binding {
    map: BTreeMap<EntityId, EntityId>,
}

impl Binding {
    fn id(&self, demo: EntityId) -> EntityId {
        self.map.get(&demo).copied().unwrap_or(demo)
    }

}

/// The world goal that talks about `id`, if any.
fn world_goal_for(world: &WorldState, id: EntityId) -> Option<&GoalSpec> {
    let e = world.entity(id)?;
    world.goals.iter().find(|g| g.subject.matches(&e))
}

/// Object goals replaced by the world's own goal for that object, and push
/// frames re-aimed at it.
fn live_goal(world: &WorldState, mut g: GoalSpec) -> GoalSpec {
    if let EntitySelector::Id(id) = g.subject {
        if world.object(id).is_some() {
            if let Some(wg) = world_goal_for(world, id) {
                return GoalSpec { subject: EntitySelector::Id(id), ..wg.clone() };
            }
        }
    }
    if let GoalFrame::TowardPoint { anchor, toward } = &mut g.frame {
        if let Some(t) = world_goal_for(world, *anchor).and_then(|wg| world_target(world, wg).ok()) {
            *toward = t.position();
        }
    }
    g
}

fn goal_subject(g: &GoalSpec) -> Option<EntityId> {
    match g.subject {
        EntitySelector::Id(id) => Some(id),
        _ => None,
    }
}

fn goal_error(world: &WorldState, g: &GoalSpec) -> f64 {
    check_goal(world, g).map(|c| c.position_error).unwrap_or(f64::INFINITY)
}

fn holds(world: &WorldState, g: &GoalSpec) -> bool {
    verify_goal(world, g).unwrap_or(false)
}

fn trigger_matches(t: &Trigger, e: &sim::EntityRef<'_>) -> bool {
    e.shape().kind_name() == t.shape.kind_name() && (!t.match_color || e.color() == t.color)
}

enum Task {
    Runner { runner: SkillRunner, goal: Option<GoalSpec>, station: bool },
    Learned { id: String, robots: Vec<EntityId>, object: EntityId },
    Idle,
}

/// Entities an entry refers to, in live ids.
fn referenced(entry: &PolicyEntry, alloc: &BTreeMap<EntityId, EntityId>, bind: &Binding) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    for (r, s) in &entry.skills {
        if *s == SkillClass::Idle {
            continue;
        }
        if let Some(f) = entry.descriptor(*r).and_then(|d| d.derived.focus_entity) {
            out.insert(alloc.get(&f).copied().unwrap_or_else(|| bind.id(f)));
        }
    }
    out
}

fn learned_object_goal(goals: &[GoalSpec], object: EntityId) -> Vec<GoalSpec> {
    goals.iter().filter(|g| goal_subject(g) == Some(object)).cloned().collect()
}

/// One attempt at one entry. `Ok(true)` when the entry completed.
fn run_entry(
    run: &mut Run<'_, '_>,
    entry: &PolicyEntry,
    alloc: &BTreeMap<EntityId, EntityId>,
    bind: &Binding,
    registry: &SkillRegistry,
) -> Result<bool, Stop> {
    let cfg = run.cfg;
    let map_id = |id: EntityId| alloc.get(&id).copied().unwrap_or_else(|| bind.id(id));
    let goals: Vec<GoalSpec> = entry
        .goal
        .all_of
        .iter()
        .map(|g| {
            let mut g = g.clone();
            if let EntitySelector::Id(id) = g.subject {
                g.subject = EntitySelector::Id(map_id(id));
            }
            g.frame = match g.frame {
                GoalFrame::RelativeTo(a) => GoalFrame::RelativeTo(map_id(a)),
                GoalFrame::TowardPoint { anchor, toward } => GoalFrame::TowardPoint { anchor: map_id(anchor), toward },
                f => f,
            };
            live_goal(&run.world, g)
        })
        .collect();
    let robot_goal = |r: EntityId| goals.iter().find(|g| goal_subject(g) == Some(r)).cloned();

    let mut tasks: Vec<(EntityId, Task)> = Vec::new();
    let mut learned_groups: BTreeMap<(String, EntityId), Vec<EntityId>> = BTreeMap::new();
    for (demo_r, class) in &entry.skills {
        let r = map_id(*demo_r);
        let d = entry.descriptor(*demo_r);
        let focus = d.and_then(|d| d.derived.focus_entity).map(map_id);
        let g = robot_goal(r);
        let task = match class {
            SkillClass::Approach | SkillClass::Idle if g.is_some() => {
                let g = g.expect("checked");
                let zone = 0.5 * g.pos_tol;
                let anchor = focus.unwrap_or(r);
                let runner = SkillRunner::new(SkillKind::Approach { zone_radius: zone }, r, anchor, cfg.gains, cfg.entry_budget as u64)
                    .with_slot(g.clone());
                Task::Runner { runner, goal: Some(g), station: true }
            }
            SkillClass::MoveToContact => match focus {
                Some(f) => {
                    let mut runner = SkillRunner::new(SkillKind::MoveToContact, r, f, cfg.gains, cfg.entry_budget as u64);
                    if let Some(g) = &g {
                        runner = runner.with_slot(g.clone());
                    }
                    Task::Runner { runner, goal: g, station: false }
                }
                None => Task::Idle,
            },
            SkillClass::DetachContact => match focus {
                Some(f) => Task::Runner {
                    runner: SkillRunner::new(SkillKind::DetachContact, r, f, cfg.gains, 100),
                    goal: None,
                    station: false,
                },
                None => Task::Idle,
            },
            SkillClass::Retreat => match focus {
                Some(f) => {
                    let clear = d.map(|d| d.derived.focus_gap).unwrap_or(0.03).clamp(0.02, 0.15);
                    Task::Runner {
                        runner: SkillRunner::new(SkillKind::Retreat { clear_radius: clear }, r, f, cfg.gains, 200),
                        goal: None,
                        station: false,
                    }
                }
                None => Task::Idle,
            },
            SkillClass::LearnedSkill(id) => match focus {
                Some(f) if run.world.object(f).is_some() => {
                    if registry.get(id).is_none() {
                        return Err(Stop::Failed(format!("learned skill `{id}` has no registered controller")));
                    }
                    learned_groups.entry((id.clone(), f)).or_default().push(r);
                    continue;
                }
                _ => Task::Idle,
            },
            _ => Task::Idle,
        };
        tasks.push((r, task));
    }
    for ((id, object), robots) in learned_groups {
        tasks.push((robots[0], Task::Learned { id, robots, object }));
    }

    let object_goals: BTreeMap<EntityId, Vec<GoalSpec>> = tasks
        .iter()
        .filter_map(|(_, t)| match t {
            Task::Learned { object, .. } => Some((*object, learned_object_goal(&goals, *object))),
            _ => None,
        })
        .collect();

    let mut done: Vec<bool> = vec![false; tasks.len()];
    let mut lost: BTreeMap<EntityId, usize> = BTreeMap::new();
    let mut recoveries = 0usize;
    let mut recovering: BTreeMap<usize, Vec<SkillRunner>> = BTreeMap::new();
    for _ in 0..cfg.entry_budget {
        let mut actions = BTreeMap::new();
        for (i, (robot, task)) in tasks.iter_mut().enumerate() {
            match task {
                Task::Idle => done[i] = true,
                Task::Runner { runner, goal, station } => {
                    if done[i] {
                        if *station && goal.as_ref().is_some_and(|g| goal_error(&run.world, g) > 0.9 * g.pos_tol) {
                            runner.reset();
                            done[i] = false;
                        } else {
                            continue;
                        }
                    }
                    let cmd = runner.command(&run.world);
                    if let Some(reason) = cmd.failed {
                        return Err(Stop::Failed(format!("robot {robot}: {reason}")));
                    }
                    if cmd.done {
                        done[i] = true;
                    } else {
                        actions.insert(*robot, cmd.wheel_speeds);
                    }
                }
                Task::Learned { id, robots, object } => {
                    let og = &object_goals[object];
                    if og.iter().all(|g| holds(&run.world, g)) {
                        done[i] = true;
                        recovering.remove(&i);
                        continue;
                    }
                    done[i] = false;
                    let Some(target) = og.first().and_then(|g| world_target(&run.world, g).ok()) else {
                        done[i] = true;
                        continue;
                    };
                    let goal_pt = target.position();
                    if let Some(rs) = recovering.get_mut(&i) {
                        let mut all = true;
                        for r in rs.iter_mut() {
                            let cmd = r.command(&run.world);
                            if let Some(reason) = cmd.failed {
                                return Err(Stop::Failed(format!("recontact: {reason}")));
                            }
                            if !cmd.done {
                                all = false;
                                actions.insert(cmd.robot_id, cmd.wheel_speeds);
                            }
                        }
                        if !all {
                            continue;
                        }
                        recovering.remove(&i);
                        for r in robots.iter() {
                            lost.insert(*r, 0);
                        }
                    }
                    let ctrl = registry.get(id).expect("resolved above");
                    let speeds = ctrl.act(&run.world, robots, *object, goal_pt);
                    let mut any_lost = false;
                    for (r, w) in robots.iter().zip(speeds) {
                        actions.insert(*r, w);
                        let c = lost.entry(*r).or_insert(0);
                        if robot_in_contact(&run.world, *r, *object) {
                            *c = 0;
                        } else {
                            *c += 1;
                            if *c >= cfg.contact_loss_steps {
                                any_lost = true;
                            }
                        }
                    }
                    if any_lost {
                        if recoveries >= cfg.contact_recoveries {
                            return Err(Stop::Failed(format!("robot {}: contact lost", robots[0])));
                        }
                        recoveries += 1;
                        let reach = run.world.object(*object).map(|o| o.shape.bounding_radius()).unwrap_or(0.0)
                            + sim::ROBOT_RADIUS
                            + CONTACT_GAP;
                        let k = robots.len();
                        let rs = robots
                            .iter()
                            .enumerate()
                            .map(|(j, r)| {
                                let lateral = if k == 1 { 0.0 } else { (j as f64 - 0.5 * (k - 1) as f64) * 0.05 };
                                let reach = (reach * reach - lateral * lateral).max(0.0).sqrt();
                                SkillRunner::new(SkillKind::MoveToContact, *r, *object, cfg.gains, 600)
                                    .with_slot(push_slot(*r, *object, goal_pt, reach, lateral))
                            })
                            .collect();
                        recovering.insert(i, rs);
                        for r in robots.iter() {
                            actions.remove(r);
                        }
                    }
                }
            }
        }
        let robot_goals_ok = tasks.iter().all(|(_, t)| match t {
            Task::Runner { goal: Some(g), .. } => holds(&run.world, g) || goal_error(&run.world, g).is_infinite(),
            _ => true,
        });
        if done.iter().all(|d| *d) {
            if robot_goals_ok {
                return Ok(true);
            }
            if actions.is_empty() {
                return Ok(false);
            }
        }
        run.advance(&actions)?;
    }
    Ok(false)
}

/// Runs the policy on a private copy of the scenario.
pub fn execute_policy<'o>(
    scenario: &Scenario,
    policy: &TaskPolicy,
    registry: &SkillRegistry,
    cfg: &ExecConfig,
    observer: Option<&'o mut Observer<'o>>,
) -> Result<(WorldState, TrialOutcome), ExecError> {
    for id in policy.learned_skills() {
        if registry.get(&id).is_none() {
            return Err(ExecError::UnresolvedSkill(id));
        }
    }
    let mut scenario = scenario.clone();
    let mut world = scenario.world.clone();
    scenario.apply_due_spawns(&mut world, 0);
    let alloc = allocate(policy, &world)?;
    let mut run = Run { scenario, world, step: 0, cfg, observer, entry: None };
    let mut bind = Binding::default();
    let mut failure: Option<String> = None;
    let mut skip_until = 0usize;

    if let Some(t) = &policy.trigger {
        let mut waited = 0;
        loop {
            let found = run.world.entities().filter(|e| !e.is_robot() && trigger_matches(t, e)).map(|e| e.id()).min();
            if let Some(id) = found {
                bind.map.insert(t.entity, id);
                break;
            }
            if waited >= cfg.trigger_wait {
                failure = Some("trigger_timeout".into());
                break;
            }
            waited += 1;
            if let Err(s) = run.advance(&BTreeMap::new()) {
                failure = Some(stop_reason(s));
                break;
            }
        }
        skip_until = t.frame;
    }

    if failure.is_none() {
        'entries: for (i, entry) in policy.entries.iter().enumerate() {
            if entry.end_frame <= skip_until && policy.trigger.is_some() {
                continue;
            }
            run.entry = Some(i);
            let needed = referenced(entry, &alloc.robots, &bind);
            let mut waited = 0;
            while needed.iter().any(|id| run.world.entity(*id).is_none()) {
                if waited >= cfg.absent_wait {
                    failure = Some(format!("entry {i}: entity missing"));
                    break 'entries;
                }
                waited += 1;
                if let Err(s) = run.advance(&BTreeMap::new()) {
                    failure = Some(stop_reason(s));
                    break 'entries;
                }
            }
            let mut attempt = 0;
            loop {
                match run_entry(&mut run, entry, &alloc.robots, &bind, registry) {
                    Ok(true) => break,
                    Ok(false) if attempt < cfg.entry_retries => attempt += 1,
                    Err(Stop::Failed(_)) if attempt < cfg.entry_retries => attempt += 1,
                    Ok(false) => {
                        failure = Some(format!("entry {i}: timed out"));
                        break 'entries;
                    }
                    Err(s) => {
                        failure = Some(format!("entry {i}: {}", stop_reason(s)));
                        break 'entries;
                    }
                }
            }
        }
    }
    run.entry = None;
    let task = TaskName::ALL.iter().copied().find(|t| t.as_str() == policy.task_name);
    let (ok, errors) = task_success(&run.world, &run.scenario, task);
    if failure.is_none() && !ok {
        failure = Some("goal_not_met".into());
    }
    let outcome = TrialOutcome {
        seed: run.scenario.seed,
        success: failure.is_none(),
        steps_used: run.step,
        failure_reason: failure,
        final_goal_errors: errors,
    };
    Ok((run.world, outcome))
}

fn stop_reason(s: Stop) -> String {
    match s {
        Stop::Budget => "budget".into(),
        Stop::Failed(r) => r,
    }
}

/// World goals (for entities present), plus the task's own formation checks.
pub fn task_success(world: &WorldState, scenario: &Scenario, task: Option<TaskName>) -> (bool, Vec<GoalResidual>) {
    let mut ok = scenario.pending_spawns() == 0;
    let mut errors = Vec::new();
    for (i, g) in world.goals.iter().enumerate() {
        match check_goal(world, g) {
            Ok(c) => {
                ok &= c.satisfied;
                errors.push(GoalResidual { goal: i, position_error: c.position_error, angle_error: c.angle_error });
            }
            Err(GoalError::Unresolvable(_)) => {}
            Err(_) => ok = false,
        }
    }
    match task {
        Some(TaskName::IntruderAttack) => ok &= encircled(world, INTRUDER_ID, ENCIRCLE_REACH),
        Some(TaskName::LeaderFollower) => {
            ok &= world.robots.iter().any(|r| {
                (r.pose.position() - LEADER_DESTINATION).norm() <= LEADER_TOL && follow_zone_ok(world, r.id, FOLLOW_TOL)
            })
        }
        _ => {}
    }
    (ok, errors)
}

/// Runs `trials` seeded scenarios of `task`; trial `i` uses seed `base_seed + i`.
pub fn evaluate(
    task: TaskName,
    policy: &TaskPolicy,
    registry: &SkillRegistry,
    cfg: &ExecConfig,
    params: &ScenarioParams,
    trials: usize,
    base_seed: u64,
) -> Result<EvalReport, ExecError> {
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let seed = base_seed + i as u64;
        let scenario = make_scenario(task, seed, params)?;
        let (_, outcome) = execute_policy(&scenario, policy, registry, cfg, None)?;
        out.push(outcome);
    }
    Ok(EvalReport::from_trials(task.as_str(), out))
}
