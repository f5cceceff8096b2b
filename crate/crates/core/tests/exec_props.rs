use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use mrlfd::exec::{
    allocate, encircled, evaluate, execute_policy, verify_goal, EvalReport, ExecConfig, ExecError, ScriptedPush,
    SkillRegistry, TrialOutcome,
};
use mrlfd::geometry::{Pose2D, Shape, Vec2};
use mrlfd::inference::corpus::generate_corpus;
use mrlfd::inference::{infer_policy, train_tree, DecisionTree, TaskPolicy};
use mrlfd::sim::{
    make_scenario, Arena, EntityId, EntitySelector, GoalError, GoalFrame, GoalSpec, GoalTarget, ObjectState,
    RobotState, TaskName, WheelSpeeds, WorldState,
};
use mrlfd::trace::script_demo;

fn tree() -> &'static DecisionTree {
    static TREE: OnceLock<DecisionTree> = OnceLock::new();
    TREE.get_or_init(|| train_tree(&generate_corpus(1, 60).0, &Default::default()).unwrap())
}

fn policy(task: TaskName) -> TaskPolicy {
    let trace = script_demo(task, 0, &Default::default()).unwrap();
    infer_policy(&trace, tree(), &Default::default()).unwrap()
}

fn object(id: u32, pose: Pose2D, color: &str) -> ObjectState {
    ObjectState {
        id: EntityId(id),
        pose,
        shape: Shape::Rectangle { width: 0.12, height: 0.04 },
        color: color.into(),
        movable: true,
        required_pushers: 2,
    }
}

fn translated(w: &WorldState, d: Vec2) -> WorldState {
    let mut w = w.clone();
    for r in &mut w.robots {
        r.pose.x += d.x;
        r.pose.y += d.y;
    }
    for o in &mut w.objects {
        o.pose.x += d.x;
        o.pose.y += d.y;
    }
    w
}

fn roles_policy(roles: &[Vec2]) -> TaskPolicy {
    TaskPolicy {
        task_name: "custom".into(),
        trigger: None,
        roles: roles.iter().enumerate().map(|(i, p)| (EntityId(i as u32 + 1), Pose2D::new(p.x, p.y, 0.0))).collect(),
        entries: vec![],
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn arb_point() -> impl Strategy<Value = Vec2> {
    (0.05..1.45f64, 0.05..0.95f64).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn relative_goals_ignore_global_translation(
        anchor in (0.5..1.0f64, 0.45..0.55f64, -3.1..3.1f64),
        subject in (-0.15..0.15f64, -0.15..0.15f64),
        target in (-0.1..0.1f64, -0.1..0.1f64, -3.1..3.1f64),
        shift in (-0.15..0.15f64, -0.15..0.15f64),
        toward in (-0.3..0.3f64, -0.3..0.3f64),
        tol in 0.01..0.2f64,
        use_toward: bool,
    ) {
        let mut w = WorldState::empty(Arena::default());
        w.objects.push(object(101, Pose2D::new(anchor.0, anchor.1, anchor.2), "red"));
        w.robots.push(RobotState::new(EntityId(1), Pose2D::new(anchor.0 + subject.0, anchor.1 + subject.1, 0.0)));
        let d = Vec2::new(shift.0, shift.1);
        let tw = Vec2::new(anchor.0 + toward.0, anchor.1 + toward.1);
        let frame = |dd: Vec2| if use_toward {
            GoalFrame::TowardPoint { anchor: EntityId(101), toward: tw + dd }
        } else {
            GoalFrame::RelativeTo(EntityId(101))
        };
        let goal = |dd: Vec2| GoalSpec {
            subject: EntitySelector::Id(EntityId(1)),
            target: GoalTarget::Pose(Pose2D::new(target.0, target.1, target.2)),
            frame: frame(dd),
            pos_tol: tol,
            ang_tol: 0.1,
            require_angle: false,
        };
        let before = verify_goal(&w, &goal(Vec2::new(0.0, 0.0))).unwrap();
        let after = verify_goal(&translated(&w, d), &goal(d)).unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn allocation_minimizes_summed_distance(roles in prop::collection::vec(arb_point(), 1..5), extra in prop::collection::vec(arb_point(), 0..2), order in 0usize..24) {
        let mut robots: Vec<Vec2> = roles.iter().rev().copied().chain(extra).collect();
        let k = order % robots.len();
        robots.rotate_left(k);
        let mut w = WorldState::empty(Arena::default());
        for (i, p) in robots.iter().enumerate() {
            w.robots.push(RobotState::new(EntityId(10 + i as u32), Pose2D::new(p.x, p.y, 0.0)));
        }
        // a slight perturbation of each role keeps the optimum unique
        let jittered: Vec<Vec2> = roles.iter().enumerate().map(|(i, p)| Vec2::new(p.x + 1e-4 * i as f64, p.y)).collect();
        let p = roles_policy(&jittered);
        let alloc = allocate(&p, &w).unwrap();
        let cost = |a: Vec2, b: Vec2| Vec2::new((a.x - b.x) / 1.5, (a.y - b.y) / 1.0).norm();
        let pos = |id: EntityId| w.robot(id).unwrap().pose.position();
        let got: f64 = p.roles.iter().map(|(r, pose)| cost(pose.position(), pos(alloc.robots[r]))).sum();
        let mut best = f64::INFINITY;
        for perm in permutations(robots.len()) {
            let c: f64 = jittered.iter().enumerate().map(|(i, rp)| cost(*rp, robots[perm[i]])).sum();
            best = best.min(c);
        }
        prop_assert!((got - best).abs() < 1e-9, "got {got}, best {best}");
        let mut targets: Vec<_> = alloc.robots.values().collect();
        targets.sort();
        targets.dedup();
        prop_assert_eq!(targets.len(), roles.len());
    }
}

#[test]
fn three_roles_on_permuted_robots() {
    let roles = [Vec2::new(0.2, 0.2), Vec2::new(0.7, 0.5), Vec2::new(1.3, 0.8)];
    let mut w = WorldState::empty(Arena::default());
    for (id, i) in [(5, 2), (6, 0), (7, 1)] {
        let p = roles[i] + Vec2::new(0.01, -0.01);
        w.robots.push(RobotState::new(EntityId(id), Pose2D::new(p.x, p.y, 1.0)));
    }
    let a = allocate(&roles_policy(&roles), &w).unwrap();
    let want = BTreeMap::from([(EntityId(1), EntityId(6)), (EntityId(2), EntityId(7)), (EntityId(3), EntityId(5))]);
    assert_eq!(a.robots, want);

    let one = allocate(&roles_policy(&roles[..1]), &WorldState { robots: w.robots[1..2].to_vec(), ..w.clone() }).unwrap();
    assert_eq!(one.robots, BTreeMap::from([(EntityId(1), EntityId(6))]));

    let two = WorldState { robots: w.robots[..2].to_vec(), ..w };
    assert_eq!(
        allocate(&roles_policy(&roles), &two).unwrap_err(),
        ExecError::TooFewRobots { needed: 3, available: 2 }
    );
}

#[test]
fn rotation_tolerance_is_two_degrees() {
    let deg = std::f64::consts::PI / 180.0;
    let goal = GoalSpec {
        subject: EntitySelector::Id(EntityId(101)),
        target: GoalTarget::Pose(Pose2D::new(0.75, 0.5, 180.0 * deg)),
        frame: GoalFrame::Absolute,
        pos_tol: 0.05,
        ang_tol: 2.0 * deg,
        require_angle: true,
    };
    let at = |a: f64| {
        let mut w = WorldState::empty(Arena::default());
        w.objects.push(object(101, Pose2D::new(0.75, 0.5, a * deg), "red"));
        verify_goal(&w, &goal).unwrap()
    };
    assert!(at(178.5));
    assert!(!at(177.0));
    assert!(at(178.01) && at(-178.01));
    assert!(!at(177.99) && !at(-177.99));
}

#[test]
fn ambiguous_color_goal_is_an_error() {
    let mut w = WorldState::empty(Arena::default());
    w.objects.push(object(101, Pose2D::new(0.3, 0.3, 0.0), "blue"));
    w.objects.push(object(102, Pose2D::new(0.9, 0.3, 0.0), "blue"));
    let goal = GoalSpec {
        subject: EntitySelector::Attr { color: Some("blue".into()), shape: None },
        target: GoalTarget::Region { center: Vec2::new(0.3, 0.3), radius: 0.1 },
        frame: GoalFrame::Absolute,
        pos_tol: 0.05,
        ang_tol: 0.0,
        require_angle: false,
    };
    assert!(matches!(verify_goal(&w, &goal), Err(GoalError::Ambiguous(_, 2))));
}

#[test]
fn encirclement_needs_reach_and_no_half_turn_gap() {
    let mut w = WorldState::empty(Arena::default());
    w.objects.push(object(100, Pose2D::new(0.75, 0.5, 0.0), "red"));
    let ring = |angles: &[f64], r: f64| {
        let mut w = w.clone();
        for (i, a) in angles.iter().enumerate() {
            let p = Vec2::new(0.75, 0.5) + Vec2::from_angle(*a) * r;
            w.robots.push(RobotState::new(EntityId(i as u32 + 1), Pose2D::new(p.x, p.y, 0.0)));
        }
        encircled(&w, EntityId(100), 0.10)
    };
    assert!(ring(&[0.0, 2.1, 4.2], 0.08));
    assert!(!ring(&[0.0, 2.1, 4.2], 0.11));
    assert!(!ring(&[0.0, 0.5, 1.0], 0.08));
    assert!(!ring(&[0.0, std::f64::consts::PI], 0.08));
}

#[test]
fn report_arithmetic() {
    let trials = (0..30)
        .map(|i| TrialOutcome { seed: i, success: i >= 3, steps_used: 1, failure_reason: None, final_goal_errors: vec![] })
        .collect();
    let r = EvalReport::from_trials("t", trials);
    assert_eq!(r.successes(), 27);
    assert!((r.success_rate - 0.9).abs() < 1e-12);
}

#[test]
fn one_step_budget_fails_on_budget() {
    let p = policy(TaskName::LeaderFollower);
    let cfg = ExecConfig { step_budget: 1, ..Default::default() };
    let s = make_scenario(TaskName::LeaderFollower, 4, &Default::default()).unwrap();
    let (_, out) = execute_policy(&s, &p, &SkillRegistry::new(), &cfg, None).unwrap();
    assert!(!out.success);
    assert!(out.failure_reason.unwrap().contains("budget"));
    assert_eq!(out.steps_used, 1);
}

#[test]
fn unallocated_robots_are_never_driven() {
    let p = policy(TaskName::LeaderFollower);
    let mut s = make_scenario(TaskName::LeaderFollower, 2, &Default::default()).unwrap();
    s.world.robots.push(RobotState::new(EntityId(9), Pose2D::new(1.4, 0.08, 0.0)));
    let alloc = allocate(&p, &s.world).unwrap();
    assert!(!alloc.robots.values().any(|r| *r == EntityId(9)));
    let mut steps = 0;
    let mut obs = |w: &WorldState, _: Option<usize>| {
        steps += 1;
        assert_eq!(w.robot(EntityId(9)).unwrap().wheel_speeds, WheelSpeeds::STOP);
    };
    let (_, out) = execute_policy(&s, &p, &SkillRegistry::new(), &ExecConfig::default(), Some(&mut obs)).unwrap();
    assert!(out.steps_used > 0);
    assert_eq!(steps, out.steps_used);
}

#[test]
fn trial_outcomes_do_not_depend_on_run_order() {
    let p = policy(TaskName::ObjectTransport);
    let reg = SkillRegistry::new().with("push", Arc::new(ScriptedPush));
    let cfg = ExecConfig::default();
    let report = evaluate(TaskName::ObjectTransport, &p, &reg, &cfg, &Default::default(), 4, 20).unwrap();
    let mut reversed: Vec<TrialOutcome> = (20..24)
        .rev()
        .map(|seed| {
            let s = make_scenario(TaskName::ObjectTransport, seed, &Default::default()).unwrap();
            execute_policy(&s, &p, &reg, &cfg, None).unwrap().1
        })
        .collect();
    reversed.reverse();
    assert_eq!(report.trials, reversed);
    let again = evaluate(TaskName::ObjectTransport, &p, &reg, &cfg, &Default::default(), 4, 20).unwrap();
    assert_eq!(report, again);
}

#[test]
fn missing_learned_controller_is_reported() {
    let p = policy(TaskName::ObjectTransport);
    let s = make_scenario(TaskName::ObjectTransport, 0, &Default::default()).unwrap();
    let err = execute_policy(&s, &p, &SkillRegistry::new(), &ExecConfig::default(), None).unwrap_err();
    assert_eq!(err, ExecError::UnresolvedSkill("push".into()));
}

#[test]
fn intruder_policy_transfers_to_new_colors_and_positions() {
    let p = policy(TaskName::IntruderAttack);
    let demo_color = p.trigger.as_ref().unwrap().color.clone();
    let mut other_color = 0;
    for seed in 1..8 {
        let s = make_scenario(TaskName::IntruderAttack, seed, &Default::default()).unwrap();
        let color = match &s.spawns[0].entity {
            mrlfd::sim::Entity::Object(o) => o.color.clone(),
            mrlfd::sim::Entity::Robot(_) => unreachable!(),
        };
        if color == demo_color {
            continue;
        }
        other_color += 1;
        let (_, out) = execute_policy(&s, &p, &SkillRegistry::new(), &ExecConfig::default(), None).unwrap();
        assert!(out.success, "seed {seed}: {:?}", out.failure_reason);
    }
    assert!(other_color > 0);
}
