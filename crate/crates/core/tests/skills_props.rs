use proptest::prelude::*;

use mrlfd::geometry::{Pose2D, Shape, Vec2};
use mrlfd::sim::{detect_contacts, Arena, ContactPair, EntityId, ObjectState, RobotState, WorldState, V_MAX};
use mrlfd::skills::{mix, pd_control, pd_control_reverse, run_skill, PdError, PdGains, SkillKind};

const DISK_R: f64 = 0.035;

fn world(robot: Pose2D, disk: Vec2) -> WorldState {
    let mut w = WorldState::empty(Arena::default());
    w.robots.push(RobotState::new(EntityId(1), robot));
    w.objects.push(ObjectState {
        id: EntityId(101),
        pose: Pose2D::new(disk.x, disk.y, 0.0),
        shape: Shape::Circle { radius: DISK_R },
        color: "red".into(),
        movable: false,
        required_pushers: 1,
    });
    w
}

fn gap(w: &WorldState) -> f64 {
    (w.robots[0].pose.position() - w.objects[0].pose.position()).norm() - w.robots[0].body_radius - DISK_R
}

fn arb_pose() -> impl Strategy<Value = Pose2D> {
    (0.05..1.45f64, 0.05..0.95f64, -3.14..3.14f64).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
}

fn arb_disk() -> impl Strategy<Value = Vec2> {
    (0.1..1.4f64, 0.1..0.9f64).prop_map(|(x, y)| Vec2::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn approach_terminates_from_any_start(start in arb_pose(), disk in arb_disk()) {
        let w = world(start, disk);
        prop_assume!(gap(&w) > 0.01);
        let kind = SkillKind::Approach { zone_radius: 0.10 };
        let (cmds, end) = run_skill(kind, EntityId(1), EntityId(101), &w, &PdGains::default(), 1000);
        let last = cmds.last().unwrap();
        prop_assert!(last.done, "failed with {:?} after {} steps", last.failed, cmds.len());
        prop_assert!(cmds.len() <= 1001);
        prop_assert!(gap(&end) <= 0.10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contact_and_retreat_hold_when_done(start in arb_pose(), disk in arb_disk()) {
        let w = world(start, disk);
        prop_assume!(gap(&w) > 0.01);
        let (cmds, end) = run_skill(SkillKind::MoveToContact, EntityId(1), EntityId(101), &w, &PdGains::default(), 1500);
        for c in &cmds {
            prop_assert!(!(c.done && c.failed.is_some()));
        }
        if cmds.last().unwrap().done {
            prop_assert!(detect_contacts(&end).contains(&ContactPair::new(EntityId(1), EntityId(101))));
            let (cmds, away) =
                run_skill(SkillKind::Retreat { clear_radius: 0.15 }, EntityId(1), EntityId(101), &end, &PdGains::default(), 1000);
            if cmds.last().unwrap().done {
                prop_assert!(gap(&away) >= 0.15 - 1e-12);
            }
        }
    }

    #[test]
    fn commands_never_exceed_v_max(
        pose in arb_pose(),
        target in (-5.0..5.0f64, -5.0..5.0f64),
        prev in prop::option::of((0.0..10.0f64, -3.2..3.2f64)),
        gains in (0.0..50.0f64, 0.0..50.0f64, 0.0..50.0f64, 0.0..50.0f64),
        reverse in any::<bool>(),
    ) {
        let g = PdGains { k_p_lin: gains.0, k_d_lin: gains.1, k_p_ang: gains.2, k_d_ang: gains.3 };
        let prev = prev.map(|(distance, heading)| PdError { distance, heading });
        let t = Vec2::new(target.0, target.1);
        let (w, _) = if reverse { pd_control_reverse(&pose, t, prev, &g, 0.1) } else { pd_control(&pose, t, prev, &g, 0.1) };
        prop_assert!(w.left.abs() <= V_MAX + 1e-12 && w.right.abs() <= V_MAX + 1e-12);
    }

    #[test]
    fn mixing_keeps_the_turn_ratio(lin in -2.0..2.0f64, ang in -20.0..20.0f64) {
        let w = mix(lin, ang, 0.04, V_MAX);
        prop_assert!(w.left.abs() <= V_MAX + 1e-12 && w.right.abs() <= V_MAX + 1e-12);
        // scaling both wheels together preserves curvature
        if lin.abs() > 1e-6 && w.linear().abs() > 1e-9 {
            prop_assert!((w.angular(0.04) / w.linear() - ang / lin).abs() < 1e-6 * (1.0 + (ang / lin).abs()));
        }
    }

    #[test]
    fn pd_depends_only_on_its_inputs(pose in arb_pose(), target in arb_disk(), d in 0.0..1.0f64, h in -3.0..3.0f64) {
        let prev = Some(PdError { distance: d, heading: h });
        let a = pd_control(&pose, target, prev, &PdGains::default(), 0.1);
        let _ = pd_control(&pose, Vec2::new(0.0, 0.0), None, &PdGains::default(), 0.1);
        let b = pd_control(&pose, target, prev, &PdGains::default(), 0.1);
        prop_assert_eq!(a, b);
    }
}
