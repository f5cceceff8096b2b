mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use proptest::prelude::*;

use common::{boundary_gap, center_gap, random_trace};
use mrlfd::exec::verify_goal;
use mrlfd::inference::corpus::generate_corpus;
use mrlfd::inference::{
    detect_keypoints, infer_detailed, infer_policy, segment_trace, train_tree, DecisionTree, InferOptions,
    InteractionKeypoint, KeypointKind, SkillClass, Transition,
};
use mrlfd::perception::{extract_features, Thresholds};
use mrlfd::sim::{Arena, EntityId, TaskName};
use mrlfd::trace::{script_demo, DemoTrace, EntityKind, TraceEntity};

fn tree() -> &'static DecisionTree {
    static TREE: OnceLock<DecisionTree> = OnceLock::new();
    TREE.get_or_init(|| train_tree(&generate_corpus(1, 60).0, &Default::default()).unwrap())
}

/// Every binary relation between two entities of one frame, from raw geometry.
fn relations(entities: &[TraceEntity], th: &Thresholds) -> BTreeMap<(KeypointKind, EntityId, EntityId), bool> {
    let mut out = BTreeMap::new();
    for a in entities {
        for b in entities {
            if a.id >= b.id && !(a.kind == EntityKind::Robot && b.kind == EntityKind::Object) {
                continue;
            }
            let (kind, on) = match (a.kind, b.kind) {
                (EntityKind::Robot, EntityKind::Robot) => (KeypointKind::RobotRobot, center_gap(a, b) <= th.proximity),
                (EntityKind::Object, EntityKind::Object) => {
                    (KeypointKind::ObjectObject, boundary_gap(a, b) <= th.contact + 1e-12)
                }
                (EntityKind::Robot, EntityKind::Object) => {
                    (KeypointKind::ObjectRobot, boundary_gap(a, b) <= th.contact + 1e-12)
                }
                (EntityKind::Object, EntityKind::Robot) => continue,
            };
            out.insert((kind, a.id, b.id), on);
        }
    }
    out
}

/// Adjacent-frame toggle scan: a keypoint wherever a relation present in
/// both frames flips, or an id enters or leaves.
fn brute_force_keypoints(trace: &DemoTrace, th: &Thresholds) -> BTreeSet<InteractionKeypoint> {
    let mut out = BTreeSet::new();
    for k in 1..trace.frames.len() {
        let (prev, cur) = (&trace.frames[k - 1], &trace.frames[k]);
        let (rp, rc) = (relations(&prev.entities, th), relations(&cur.entities, th));
        for (key, on) in &rc {
            if let Some(was) = rp.get(key) {
                if was != on {
                    out.insert(InteractionKeypoint {
                        frame_index: k,
                        kind: key.0,
                        entities: BTreeSet::from([key.1, key.2]),
                        transition: if *on { Transition::Onset } else { Transition::Offset },
                    });
                }
            }
        }
        let (ip, ic) = (prev.ids(), cur.ids());
        for (set, transition) in [(ic.difference(&ip), Transition::Appearance), (ip.difference(&ic), Transition::Disappearance)] {
            for id in set {
                out.insert(InteractionKeypoint {
                    frame_index: k,
                    kind: KeypointKind::BehaviorTrigger,
                    entities: BTreeSet::from([*id]),
                    transition,
                });
            }
        }
    }
    out
}

#[test]
fn keypoints_match_brute_force_on_100_random_traces() {
    let th = Thresholds::default();
    let mut total = 0;
    for seed in 0..100 {
        let trace = random_trace(seed);
        let got = detect_keypoints(&extract_features(&trace, &Thresholds { window: 1, ..th }).unwrap(), 0).unwrap();
        let want = brute_force_keypoints(&trace, &th);
        assert_eq!(got.iter().cloned().collect::<BTreeSet<_>>(), want, "seed {seed}");
        assert_eq!(got.len(), want.len(), "duplicates on seed {seed}");
        total += got.len();
    }
    assert!(total > 500, "random traces should toggle often, got {total}");
}

fn object_order_reversed(trace: &DemoTrace) -> DemoTrace {
    let mut t = trace.clone();
    for f in &mut t.frames {
        let (mut robots, mut objects): (Vec<_>, Vec<_>) = f.entities.drain(..).partition(|e| e.kind == EntityKind::Robot);
        objects.reverse();
        let k = 1.min(robots.len());
        robots.rotate_left(k);
        f.entities = objects.into_iter().chain(robots).collect();
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segments_partition_random_traces(seed in any::<u64>(), debounce in 0usize..4) {
        let trace = random_trace(seed);
        let th = Thresholds { window: 1, ..Thresholds::default() };
        let kps = detect_keypoints(&extract_features(&trace, &th).unwrap(), debounce).unwrap();
        let segs = segment_trace(&trace, &kps, &th).unwrap();
        prop_assert_eq!(segs.len(), kps.len() + 1);
        prop_assert_eq!(segs[0].start_frame, 0);
        prop_assert_eq!(segs.last().unwrap().end_frame, trace.len());
        for w in segs.windows(2) {
            prop_assert_eq!(w[0].end_frame, w[1].start_frame);
        }
        prop_assert_eq!(segs.iter().map(|s| s.len()).sum::<usize>(), trace.len());
    }

    #[test]
    fn inference_ignores_listing_order(task in prop::sample::select(TaskName::ALL.to_vec()), seed in 0u64..500) {
        let trace = script_demo(task, seed, &Default::default()).unwrap();
        let opts = InferOptions::default();
        let a = infer_policy(&trace, tree(), &opts).unwrap();
        prop_assert_eq!(&a, &infer_policy(&trace, tree(), &opts).unwrap());
        let b = infer_policy(&object_order_reversed(&trace), tree(), &opts).unwrap();
        let labels = |p: &mrlfd::inference::TaskPolicy| p.entries.iter().map(|e| e.skills.clone()).collect::<Vec<_>>();
        prop_assert_eq!(labels(&a), labels(&b));
        prop_assert_eq!(a, b);
    }
}

#[test]
fn entry_and_descriptor_counts_on_scripted_demos() {
    for task in TaskName::ALL {
        for seed in 0..5 {
            let trace = script_demo(task, seed, &Default::default()).unwrap();
            let inf = infer_detailed(&trace, tree(), &InferOptions::default()).unwrap();
            let m = inf.policy.entries.len();
            let r = trace.robot_ids().len();
            assert_eq!(m, inf.keypoints.len() + 1, "{task:?} seed {seed}");
            assert_eq!(inf.policy.descriptor_count(), r * m, "{task:?} seed {seed}");
            for e in &inf.policy.entries {
                assert_eq!(e.skills.len(), r);
                assert!(e.goal.all_of.iter().all(|g| g.is_valid()));
            }
        }
    }
}

#[test]
fn goals_hold_on_the_demo_frame_closing_each_segment() {
    for task in TaskName::ALL {
        for seed in 0..5 {
            let trace = script_demo(task, seed, &Default::default()).unwrap();
            let policy = infer_policy(&trace, tree(), &InferOptions::default()).unwrap();
            let mut checked = 0;
            for (i, e) in policy.entries.iter().enumerate() {
                let c = e.end_frame.min(trace.len() - 1);
                let world = trace.frames[c].to_world(Arena::default());
                for g in &e.goal.all_of {
                    assert_eq!(verify_goal(&world, g), Ok(true), "{task:?} seed {seed} entry {i}: {g:?}");
                    checked += 1;
                }
            }
            assert!(checked > 0, "{task:?} seed {seed} has no goals");
        }
    }
}

#[test]
fn stationary_trace_gives_one_idle_entry_at_the_start_state() {
    let mut trace = script_demo(TaskName::LeaderFollower, 0, &Default::default()).unwrap();
    let first = trace.frames[0].entities.clone();
    for f in &mut trace.frames[..30] {
        f.entities = first.clone();
    }
    trace.frames.truncate(30);
    let policy = infer_policy(&trace, tree(), &InferOptions::default()).unwrap();
    assert_eq!(policy.entries.len(), 1);
    assert!(policy.entries[0].skills.values().all(|s| *s == SkillClass::Idle));
    let world = trace.frames[0].to_world(Arena::default());
    assert_eq!(policy.entries[0].goal.all_of.len(), trace.robot_ids().len());
    assert!(policy.entries[0].goal.all_of.iter().all(|g| verify_goal(&world, g) == Ok(true)));
    assert!(policy.trigger.is_none());
}

#[test]
fn transport_demo_ends_in_a_learned_push() {
    let trace = script_demo(TaskName::ObjectTransport, 0, &Default::default()).unwrap();
    let policy = infer_policy(&trace, tree(), &InferOptions::default()).unwrap();
    assert!(policy.learned_skills().contains("push"));
    assert!(policy.entries.iter().any(|e| e.skills.values().any(|s| matches!(s, SkillClass::LearnedSkill(_)))));
}
