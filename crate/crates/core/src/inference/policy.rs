use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2D;
use crate::perception::{displacement, extract_features, InteractionFeatures, Thresholds};
use crate::sim::{EntityId, EntitySelector, GoalFrame, GoalSpec, GoalTarget};
use crate::trace::{DemoTrace, EntityKind, TraceEntity};

use super::keypoints::detect_keypoints;
use super::segment::segment_trace;
use super::tree::DecisionTree;
use super::{
    GoalSet, InferError, InteractionKeypoint, PolicyEntry, Segment, SkillClass, TaskPolicy, Transition, Trigger,
};

const ROBOT_SLOT_TOL: f64 = 0.03;
const OBJECT_POS_TOL: f64 = 0.05;
const OBJECT_ANG_TOL: f64 = 2.0 * std::f64::consts::PI / 180.0;
/// Later displacement above which an approached object is treated as pushed.
const LATER_MOVE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferOptions {
    pub thresholds: Thresholds,
    /// Frames a toggled feature must hold before it counts as a keypoint.
    pub debounce: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { thresholds: Thresholds::default(), debounce: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub features: Vec<InteractionFeatures>,
    pub keypoints: Vec<InteractionKeypoint>,
    pub segments: Vec<Segment>,
    pub policy: TaskPolicy,
}

fn pose_of(e: &TraceEntity) -> Pose2D {
    e.pose()
}

fn last_pose(trace: &DemoTrace, id: EntityId) -> Option<Pose2D> {
    trace.frames.iter().rev().find_map(|f| f.entity(id)).map(pose_of)
}

fn robot_goal(trace: &DemoTrace, c: usize, robot: EntityId, focus: Option<EntityId>) -> Option<GoalSpec> {
    let fc = &trace.frames[c];
    let rp = fc.entity(robot)?.pose();
    let mut anchor = focus.and_then(|id| fc.entity(id));
    // a robot anchor yields to a nearer object
    if let Some(a) = anchor.filter(|a| a.kind == EntityKind::Robot) {
        let d = |e: &TraceEntity| (e.pose().position() - rp.position()).norm();
        let near = fc.objects().min_by(|x, y| d(x).total_cmp(&d(y)));
        if let Some(o) = near.filter(|o| d(o) < d(a)) {
            anchor = Some(o);
        }
    }
    let (frame, origin) = match anchor {
        None => (GoalFrame::Absolute, Pose2D::default()),
        Some(a) => {
            let later = last_pose(trace, a.id).unwrap_or(a.pose());
            let moves = a.kind == EntityKind::Object && (later.position() - a.pose().position()).norm() > LATER_MOVE;
            if moves {
                let toward = later.position();
                let heading = (toward - a.pose().position()).angle();
                (GoalFrame::TowardPoint { anchor: a.id, toward }, Pose2D::new(a.x, a.y, heading))
            } else {
                (GoalFrame::RelativeTo(a.id), a.pose())
            }
        }
    };
    Some(GoalSpec {
        subject: EntitySelector::Id(robot),
        target: GoalTarget::Pose(origin.relative(&rp)),
        frame,
        pos_tol: ROBOT_SLOT_TOL,
        ang_tol: 0.2,
        require_angle: false,
    })
}

fn object_goals(trace: &DemoTrace, seg: &Segment, th: &Thresholds) -> Vec<GoalSpec> {
    let n = trace.frames.len();
    let c = seg.end_frame.min(n - 1);
    let s = seg.start_frame.min(c);
    let thr = th.motion_speed * trace.dt * th.window as f64;
    let mut out = Vec::new();
    for o in trace.frames[c].objects() {
        let Some(first) = (s..=c).find_map(|t| trace.frames[t].entity(o.id)) else { continue };
        let moved = (s..=c).filter_map(|t| trace.frames[t].entity(o.id)).any(|e| displacement(first, e) >= thr);
        if !moved {
            continue;
        }
        let rot: f64 = (s..c)
            .filter_map(|t| Some(crate::geometry::wrap_angle(trace.frames[t + 1].entity(o.id)?.theta - trace.frames[t].entity(o.id)?.theta)))
            .sum();
        out.push(GoalSpec {
            subject: EntitySelector::Id(o.id),
            target: GoalTarget::Pose(o.pose()),
            frame: GoalFrame::Absolute,
            pos_tol: OBJECT_POS_TOL,
            ang_tol: OBJECT_ANG_TOL,
            require_angle: rot.abs() > std::f64::consts::FRAC_PI_4,
        });
    }
    out
}

fn anchor_of(g: &GoalSpec) -> Option<EntityId> {
    match g.frame {
        GoalFrame::RelativeTo(a) | GoalFrame::TowardPoint { anchor: a, .. } => Some(a),
        GoalFrame::Absolute => None,
    }
}

/// Removes goals whose anchors lead back to their own subject.
fn drop_anchor_cycles(goals: &mut Vec<GoalSpec>) {
    let next: BTreeMap<EntityId, EntityId> = goals
        .iter()
        .filter_map(|g| match g.subject {
            EntitySelector::Id(s) => Some((s, anchor_of(g)?)),
            _ => None,
        })
        .collect();
    let cyclic = |start: EntityId| {
        let mut cur = start;
        for _ in 0..next.len() {
            match next.get(&cur) {
                Some(&n) if n == start => return true,
                Some(&n) => cur = n,
                None => return false,
            }
        }
        false
    };
    goals.retain(|g| !matches!(g.subject, EntitySelector::Id(s) if cyclic(s)));
}

fn find_trigger(trace: &DemoTrace, features: &[InteractionFeatures], keypoints: &[InteractionKeypoint]) -> Option<Trigger> {
    let appear = keypoints
        .iter()
        .find(|k| k.transition == Transition::Appearance)?;
    let first_motion = features
        .iter()
        .position(|f| f.robots.iter().any(|r| f.moving(*r)))
        .unwrap_or(usize::MAX);
    if appear.frame_index > first_motion {
        return None;
    }
    let id = *appear.entities.iter().next()?;
    let e = trace.frames[appear.frame_index].entity(id)?;
    Some(Trigger { entity: id, frame: appear.frame_index, shape: e.shape, color: e.color.clone(), match_color: false })
}

/// Full inference pipeline, keeping every intermediate product.
pub fn infer_detailed(trace: &DemoTrace, tree: &DecisionTree, opts: &InferOptions) -> Result<Inference, InferError> {
    let n = trace.frames.len();
    if n < 2 {
        return Err(InferError::ShortTrace(n));
    }
    let th = &opts.thresholds;
    let features = extract_features(trace, th)?;
    let keypoints = detect_keypoints(&features, opts.debounce)?;
    let segments = segment_trace(trace, &keypoints, th)?;
    let mut entries = Vec::with_capacity(segments.len());
    for seg in &segments {
        let c = seg.end_frame.min(n - 1);
        let mut skills = BTreeMap::new();
        let mut goals = Vec::new();
        for d in &seg.theta {
            let class = tree.classify(d);
            if matches!(class, SkillClass::Approach | SkillClass::MoveToContact) {
                goals.extend(robot_goal(trace, c, d.robot_id, d.derived.focus_entity));
            }
            skills.insert(d.robot_id, class);
        }
        drop_anchor_cycles(&mut goals);
        goals.extend(object_goals(trace, seg, th));
        entries.push(PolicyEntry {
            start_frame: seg.start_frame,
            end_frame: seg.end_frame,
            skills,
            goal: GoalSet { all_of: goals },
            theta: seg.theta.clone(),
        });
    }
    let all_idle = entries.iter().all(|e| e.skills.values().all(|s| *s == SkillClass::Idle));
    if all_idle {
        if let Some(last) = entries.last_mut() {
            let c = last.end_frame.min(n - 1);
            last.goal.all_of = trace.frames[c]
                .robots()
                .map(|r| GoalSpec {
                    subject: EntitySelector::Id(r.id),
                    target: GoalTarget::Pose(r.pose()),
                    frame: GoalFrame::Absolute,
                    pos_tol: ROBOT_SLOT_TOL,
                    ang_tol: 0.2,
                    require_angle: false,
                })
                .collect();
        }
    }
    let roles = trace.frames[0].robots().map(|r| (r.id, r.pose())).collect();
    let trigger = find_trigger(trace, &features, &keypoints);
    let policy = TaskPolicy { task_name: trace.task_name.clone(), trigger, roles, entries };
    Ok(Inference { features, keypoints, segments, policy })
}

pub fn infer_policy(trace: &DemoTrace, tree: &DecisionTree, opts: &InferOptions) -> Result<TaskPolicy, InferError> {
    infer_detailed(trace, tree, opts).map(|i| i.policy)
}
