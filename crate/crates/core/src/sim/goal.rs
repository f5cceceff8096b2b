use thiserror::Error;

use crate::geometry::{wrap_angle, Pose2D};

use super::{EntityId, ROBOT_RADIUS, EntityRef, EntitySelector, GoalFrame, GoalSpec, GoalTarget, WorldState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GoalError {
    #[error("goal subject {0:?} matches no entity")]
    Unresolvable(EntitySelector),
    #[error("goal subject {0:?} is ambiguous ({1} matches)")]
    Ambiguous(EntitySelector, usize),
    #[error("goal anchor {0} is not in the world")]
    MissingAnchor(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalCheck {
    pub position_error: f64,
    pub angle_error: f64,
    pub satisfied: bool,
}

/// Resolves a selector to exactly one entity.
pub fn resolve_subject<'a>(
    world: &'a WorldState,
    selector: &EntitySelector,
) -> Result<EntityRef<'a>, GoalError> {
    let mut found = world.entities().filter(|e| selector.matches(e));
    let first = found.next().ok_or_else(|| GoalError::Unresolvable(selector.clone()))?;
    let extra = found.count();
    if extra > 0 {
        return Err(GoalError::Ambiguous(selector.clone(), extra + 1));
    }
    Ok(first)
}

/// World-frame pose of the goal frame's origin.
pub fn frame_pose(world: &WorldState, frame: &GoalFrame) -> Result<Pose2D, GoalError> {
    match frame {
        GoalFrame::Absolute => Ok(Pose2D::default()),
        GoalFrame::RelativeTo(anchor) => world
            .entity(*anchor)
            .map(|e| e.pose())
            .ok_or(GoalError::MissingAnchor(*anchor)),
        GoalFrame::TowardPoint { anchor, toward } => {
            let a = world.entity(*anchor).ok_or(GoalError::MissingAnchor(*anchor))?.pose();
            let dir = *toward - a.position();
            let heading = if dir.norm() > 1e-9 { dir.angle() } else { 0.0 };
            Ok(Pose2D::new(a.x, a.y, heading))
        }
    }
}

/// The goal target mapped into world coordinates. Relative pose targets
/// are projected into the arena a robot radius from the walls.
pub fn world_target(world: &WorldState, goal: &GoalSpec) -> Result<GoalTarget, GoalError> {
    let origin = frame_pose(world, &goal.frame)?;
    Ok(match &goal.target {
        GoalTarget::Pose(p) if goal.frame != GoalFrame::Absolute => {
            let mut t = origin.compose(p);
            let m = ROBOT_RADIUS + 0.005;
            t.x = t.x.clamp(m, (world.arena.width - m).max(m));
            t.y = t.y.clamp(m, (world.arena.height - m).max(m));
            GoalTarget::Pose(t)
        }
        GoalTarget::Pose(p) => GoalTarget::Pose(origin.compose(p)),
        GoalTarget::Region { center, radius } => GoalTarget::Region {
            center: origin.transform_point(*center),
            radius: *radius,
        },
    })
}

pub fn check_goal(world: &WorldState, goal: &GoalSpec) -> Result<GoalCheck, GoalError> {
    let subject = resolve_subject(world, &goal.subject)?;
    let pose = subject.pose();
    let target = world_target(world, goal)?;
    let (position_error, angle_error) = match target {
        GoalTarget::Pose(t) => (
            (pose.position() - t.position()).norm(),
            wrap_angle(pose.theta - t.theta).abs(),
        ),
        GoalTarget::Region { center, radius } => {
            (((pose.position() - center).norm() - radius).max(0.0), 0.0)
        }
    };
    let angle_ok = !goal.require_angle
        || !matches!(goal.target, GoalTarget::Pose(_))
        || angle_error <= goal.ang_tol;
    Ok(GoalCheck {
        position_error,
        angle_error,
        satisfied: position_error <= goal.pos_tol && angle_ok,
    })
}
