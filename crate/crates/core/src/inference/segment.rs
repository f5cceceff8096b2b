use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;

use crate::geometry::{wrap_angle, Shape, Vec2};
use crate::perception::{body_of, displacement, frame_interactions, Thresholds};
use crate::sim::EntityId;
use crate::trace::{DemoTrace, EntityKind, TraceEntity};

use super::{Derived, InferError, InteractionKeypoint, RangeTrend, Segment, SegmentDescriptor, SkillClass};

/// Share of the path length that must point toward (or away from) an entity.
const TREND_RATIO: f64 = 0.3;
/// Boundary distance at which a nearby object anchors a retreat.
const RETREAT_REACH: f64 = 0.04;
const ROTATE_ANGLE: f64 = FRAC_PI_4;

fn pos(e: &TraceEntity) -> Vec2 {
    Vec2::new(e.x, e.y)
}

/// Largest displacement of `id` from its first observation in `[s, c]`.
fn segment_motion(trace: &DemoTrace, s: usize, c: usize, id: EntityId) -> f64 {
    let mut first: Option<&TraceEntity> = None;
    let mut best: f64 = 0.0;
    for f in &trace.frames[s..=c] {
        if let Some(e) = f.entity(id) {
            match first {
                None => first = Some(e),
                Some(a) => best = best.max(displacement(a, e)),
            }
        }
    }
    best
}

/// Summed heading change of `id` over `[s, c]`.
fn cumulative_rotation(trace: &DemoTrace, s: usize, c: usize, id: EntityId) -> f64 {
    let mut total = 0.0;
    for t in s..c {
        if let (Some(a), Some(b)) = (trace.frames[t].entity(id), trace.frames[t + 1].entity(id)) {
            total += wrap_angle(b.theta - a.theta);
        }
    }
    total
}

/// Robot path length over `[s, c]` and, per other entity, the part of it
/// spent moving toward that entity.
fn closing_rates(trace: &DemoTrace, s: usize, c: usize, robot: EntityId, other: EntityId) -> (f64, f64) {
    let mut path = 0.0;
    let mut toward = 0.0;
    for t in s..c {
        let (fa, fb) = (&trace.frames[t], &trace.frames[t + 1]);
        let (Some(a), Some(b)) = (fa.entity(robot), fb.entity(robot)) else { continue };
        let step = pos(b) - pos(a);
        path += step.norm();
        if let Some(dir) = fa.entity(other).and_then(|o| (pos(o) - pos(a)).normalized()) {
            toward += step.dot(dir);
        }
    }
    (path, toward)
}

fn trend_of(path: f64, toward: f64, moving: bool) -> RangeTrend {
    if !moving || path <= 0.0 {
        RangeTrend::Steady
    } else if toward >= TREND_RATIO * path {
        RangeTrend::Closing
    } else if toward <= -TREND_RATIO * path {
        RangeTrend::Opening
    } else {
        RangeTrend::Steady
    }
}

fn boundary(a: &TraceEntity, b: &TraceEntity) -> f64 {
    body_of(a).boundary_distance(&body_of(b))
}

/// Nearest candidate by the given distance, lowest id on ties.
fn nearest<'a>(cands: impl Iterator<Item = &'a TraceEntity>, dist: impl Fn(&TraceEntity) -> f64) -> Option<&'a TraceEntity> {
    let mut best: Option<(&TraceEntity, f64)> = None;
    for e in cands {
        let d = dist(e);
        if best.is_none_or(|(b, bd)| d < bd || (d == bd && e.id < b.id)) {
            best = Some((e, d));
        }
    }
    best.map(|(e, _)| e)
}

/// Descriptor of `robot` over the half-open frame range `[s, e)`, sampled at
/// the closing frame `min(e, n - 1)`.
pub fn describe_segment(trace: &DemoTrace, s: usize, e: usize, robot: EntityId, th: &Thresholds) -> SegmentDescriptor {
    let n = trace.frames.len();
    let c = e.min(n - 1);
    let s = s.min(c);
    let motion_thr = th.motion_speed * trace.dt * th.window as f64;
    let fc = &trace.frames[c];
    let fs = &trace.frames[s];
    let idle = SegmentDescriptor {
        robot_id: robot,
        phi: false,
        ro: Vec2::ZERO,
        f_ro: false,
        ao: Vec2::ZERO,
        psi: false,
        omega: false,
        rr: Vec2::ZERO,
        f_rr: false,
        ar: Vec2::ZERO,
        derived: Derived {
            range_trend: RangeTrend::Steady,
            focus_entity: None,
            focus_is_object: false,
            phi_start: false,
            focus_gap: 0.0,
            object_rotation: 0.0,
            object_arc: 0.0,
            object_translation: 0.0,
        },
    };
    let Some(rc) = fc.entity(robot) else { return idle };
    let ic = frame_interactions(fc, th);
    let is_ = frame_interactions(fs, th);
    let row = |f: &crate::perception::InteractionFeatures, id| f.robots.iter().position(|r| *r == id);
    let phi = row(&ic, robot).is_some_and(|i| ic.phi[i].iter().any(|x| *x));
    let phi_start = row(&is_, robot).is_some_and(|i| is_.phi[i].iter().any(|x| *x));
    let omega = row(&ic, robot).is_some_and(|i| ic.omega[i].iter().any(|x| *x));
    let f_rr = segment_motion(trace, s, c, robot) >= motion_thr;

    let objects_c: Vec<&TraceEntity> = fc.objects().collect();
    let others_c: Vec<&TraceEntity> = fc.robots().filter(|r| r.id != robot).collect();
    let touching = |f: &crate::trace::Frame| -> Vec<EntityId> {
        let Some(r) = f.entity(robot) else { return Vec::new() };
        f.objects().filter(|o| boundary(r, o) <= th.contact).map(|o| o.id).collect()
    };

    let mut focus: Option<EntityId> = None;
    let contact_c = touching(fc);
    if let Some(o) = nearest(objects_c.iter().copied().filter(|o| contact_c.contains(&o.id)), |o| boundary(rc, o)) {
        focus = Some(o.id);
    }
    if focus.is_none() {
        let contact_s = touching(fs);
        let rs = fs.entity(robot).unwrap_or(rc);
        let cands = fs.objects().filter(|o| contact_s.contains(&o.id) && fc.entity(o.id).is_some());
        focus = nearest(cands, |o| boundary(rs, o)).map(|o| o.id);
    }
    if focus.is_none() && f_rr {
        let rs = fs.entity(robot).unwrap_or(rc);
        let near = fs.objects().filter(|o| {
            let (path, toward) = closing_rates(trace, s, c, robot, o.id);
            fc.entity(o.id).is_some() && boundary(rs, o) <= RETREAT_REACH && toward <= -TREND_RATIO * path
        });
        focus = nearest(near, |o| boundary(rs, o)).map(|o| o.id);
    }
    if focus.is_none() && f_rr {
        let present: BTreeSet<EntityId> = fs.ids().intersection(&fc.ids()).copied().collect();
        let closing: Vec<&TraceEntity> = fc
            .entities
            .iter()
            .filter(|x| x.id != robot && present.contains(&x.id))
            .filter(|x| {
                let (path, toward) = closing_rates(trace, s, c, robot, x.id);
                path > 0.0 && toward >= TREND_RATIO * path
            })
            .collect();
        let dist = |x: &TraceEntity| (pos(x) - pos(rc)).norm();
        let objs = closing.iter().copied().filter(|x| x.kind == EntityKind::Object);
        focus = nearest(objs, dist)
            .or_else(|| nearest(closing.iter().copied().filter(|x| x.kind == EntityKind::Robot), dist))
            .map(|x| x.id);
    }

    let focus_ent = focus.and_then(|id| fc.entity(id));
    let range_trend = match focus {
        Some(id) => {
            let (path, toward) = closing_rates(trace, s, c, robot, id);
            trend_of(path, toward, f_rr)
        }
        None => RangeTrend::Steady,
    };
    let dist = |x: &TraceEntity| (pos(x) - pos(rc)).norm();
    let ref_obj = focus_ent
        .filter(|x| x.kind == EntityKind::Object)
        .or_else(|| nearest(objects_c.iter().copied(), dist));
    let ref_robot = focus_ent
        .filter(|x| x.kind == EntityKind::Robot)
        .or_else(|| nearest(others_c.iter().copied(), dist));

    let (ro, ao, f_ro, psi) = match ref_obj {
        Some(o) => {
            let j = ic.objects.iter().position(|x| *x == o.id);
            (
                pos(o) - pos(rc),
                pos(o),
                segment_motion(trace, s, c, o.id) >= motion_thr,
                j.is_some_and(|j| ic.psi[j].iter().any(|x| *x)),
            )
        }
        None => (Vec2::ZERO, Vec2::ZERO, false, false),
    };
    let (object_rotation, object_arc, object_translation) = match ref_obj {
        Some(o) if !matches!(o.shape, Shape::Circle { .. }) => {
            let rot = cumulative_rotation(trace, s, c, o.id).abs();
            let first = (s..=c).find_map(|t| trace.frames[t].entity(o.id)).unwrap_or(o);
            (rot, rot * o.shape.bounding_radius(), (pos(o) - pos(first)).norm())
        }
        Some(o) => {
            let first = (s..=c).find_map(|t| trace.frames[t].entity(o.id)).unwrap_or(o);
            (0.0, 0.0, (pos(o) - pos(first)).norm())
        }
        None => (0.0, 0.0, 0.0),
    };
    let rr = ref_robot.map(|b| pos(b) - pos(rc)).unwrap_or(Vec2::ZERO);

    SegmentDescriptor {
        robot_id: robot,
        phi,
        ro,
        f_ro,
        ao,
        psi,
        omega,
        rr,
        f_rr,
        ar: pos(rc),
        derived: Derived {
            range_trend,
            focus_entity: focus,
            focus_is_object: focus_ent.is_some_and(|x| x.kind == EntityKind::Object),
            phi_start,
            focus_gap: focus_ent.map(|x| boundary(rc, x)).unwrap_or(0.0),
            object_rotation,
            object_arc,
            object_translation,
        },
    }
}

/// Reference labelling of a descriptor; the training corpus is filtered to
/// agree with it.
pub fn rule_label(d: &SegmentDescriptor) -> SkillClass {
    if !d.f_rr {
        SkillClass::Idle
    } else if d.f_ro && (d.phi || d.derived.phi_start) {
        SkillClass::LearnedSkill(learned_id(d).to_string())
    } else if d.phi {
        SkillClass::MoveToContact
    } else if d.derived.phi_start {
        SkillClass::DetachContact
    } else if d.derived.range_trend == RangeTrend::Opening {
        SkillClass::Retreat
    } else {
        SkillClass::Approach
    }
}

/// Learned skill id for a segment the classifier marked as learned.
pub fn learned_id(d: &SegmentDescriptor) -> &'static str {
    if d.derived.object_rotation > ROTATE_ANGLE || d.derived.object_arc > d.derived.object_translation {
        "rotate"
    } else {
        "push"
    }
}

/// Splits the trace at every keypoint. Keypoints sharing a frame yield
/// zero-length segments, so there is always one more segment than keypoints.
pub fn segment_trace(
    trace: &DemoTrace,
    keypoints: &[InteractionKeypoint],
    th: &Thresholds,
) -> Result<Vec<Segment>, InferError> {
    let n = trace.frames.len();
    if n < 2 {
        return Err(InferError::ShortTrace(n));
    }
    let mut kps = keypoints.to_vec();
    kps.sort();
    let mut bounds: Vec<(usize, Option<InteractionKeypoint>)> = vec![(0, None)];
    bounds.extend(kps.into_iter().map(|k| (k.frame_index.min(n), Some(k))));
    let mut out = Vec::with_capacity(bounds.len());
    for i in 0..bounds.len() {
        let start = bounds[i].0;
        let end = bounds.get(i + 1).map(|b| b.0).unwrap_or(n);
        let c = end.min(n - 1);
        let mut robots: Vec<EntityId> = trace.frames[c].robots().map(|r| r.id).collect();
        robots.sort();
        let theta = robots.iter().map(|r| describe_segment(trace, start, end, *r, th)).collect();
        out.push(Segment { start_frame: start, end_frame: end, theta, boundary_keypoint: bounds[i].1.clone() });
    }
    Ok(out)
}
