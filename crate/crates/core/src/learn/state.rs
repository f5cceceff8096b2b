//! Structured state features shared by the goal classifier and SAC.
//!
//! Layout, per robot in the given order:
//! `x, y, sinθ, cosθ, v_left, v_right, obj_fx, obj_fy, goal_fx, goal_fy`
//! where `obj_f*` is the robot→object displacement and `goal_f*` the
//! object→goal displacement, both in the robot frame. Then the object block:
//! `x, y, sinθ, cosθ, goal_dx, goal_dy` with the object→goal displacement in
//! the world frame. Positions map the arena onto [−1, 1]; a displacement `d`
//! becomes `d / (|d| + DISP_SCALE)`; wheel speeds are divided by the speed
//! limit.

use crate::geometry::{Pose2D, Vec2};
use crate::sim::{Arena, EntityId, WorldState, V_MAX};
use crate::trace::Frame;

/// Displacement length mapped to 0.5.
pub const DISP_SCALE: f64 = 0.1;

pub const ROBOT_BLOCK: usize = 10;
pub const OBJECT_BLOCK: usize = 6;
/// Offsets of the wheel-speed entries inside a robot block.
pub const WHEEL_SLOTS: [usize; 2] = [4, 5];
pub const RELATIVE_ROBOT_SLOTS: [usize; 4] = [6, 7, 8, 9];

pub const ROBOT_FIELDS: [&str; ROBOT_BLOCK] =
    ["x", "y", "sin", "cos", "v_left", "v_right", "obj_fx", "obj_fy", "goal_fx", "goal_fy"];
pub const OBJECT_FIELDS: [&str; OBJECT_BLOCK] = ["x", "y", "sin", "cos", "goal_dx", "goal_dy"];

pub fn state_dim(robots: usize) -> usize {
    robots * ROBOT_BLOCK + OBJECT_BLOCK
}

/// Declared feature names in vector order.
pub fn feature_names(robots: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(state_dim(robots));
    for i in 0..robots {
        out.extend(ROBOT_FIELDS.iter().map(|f| format!("robot{i}.{f}")));
    }
    out.extend(OBJECT_FIELDS.iter().map(|f| format!("object.{f}")));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with every wheel-speed entry zeroed.
    pub fn without_wheels(&self, robots: usize) -> StateVector {
        let mut v = self.0.clone();
        for i in 0..robots {
            for s in WHEEL_SLOTS {
                v[i * ROBOT_BLOCK + s] = 0.0;
            }
        }
        StateVector(v)
    }

    /// Copy keeping only the robot-frame displacements, which do not change
    /// under a rigid motion of the whole scene. Everything else reads 0.
    pub fn relative_only(&self, robots: usize) -> StateVector {
        let mut v = vec![0.0; self.0.len()];
        for i in 0..robots {
            for s in RELATIVE_ROBOT_SLOTS {
                v[i * ROBOT_BLOCK + s] = self.0[i * ROBOT_BLOCK + s];
            }
        }
        StateVector(v)
    }
}

struct Norm {
    w: f64,
    h: f64,
}

impl Norm {
    fn pos(&self, p: Vec2) -> [f64; 2] {
        [(2.0 * p.x / self.w - 1.0).clamp(-1.0, 1.0), (2.0 * p.y / self.h - 1.0).clamp(-1.0, 1.0)]
    }

    fn disp(&self, d: Vec2) -> [f64; 2] {
        let k = 1.0 / (d.norm() + DISP_SCALE);
        [d.x * k, d.y * k]
    }
}

fn encode(arena: Arena, robots: &[(Pose2D, [f64; 2])], object: Pose2D, goal: Vec2) -> StateVector {
    let n = Norm { w: arena.width, h: arena.height };
    let mut v = Vec::with_capacity(state_dim(robots.len()));
    let og = goal - object.position();
    for (p, wheels) in robots {
        let local_obj = p.inverse_transform_point(object.position());
        let local_goal = og.rotate(-p.theta);
        v.extend(n.pos(p.position()));
        v.extend([p.theta.sin(), p.theta.cos()]);
        v.extend(wheels.iter().map(|w| (w / V_MAX).clamp(-1.0, 1.0)));
        v.extend(n.disp(local_obj));
        v.extend(n.disp(local_goal));
    }
    v.extend(n.pos(object.position()));
    v.extend([object.theta.sin(), object.theta.cos()]);
    v.extend(n.disp(og));
    StateVector(v)
}

/// State of `robots` pushing `object` toward `goal`; `None` if an id is
/// missing.
pub fn state_vector(world: &WorldState, robots: &[EntityId], object: EntityId, goal: Vec2) -> Option<StateVector> {
    let rs = robots
        .iter()
        .map(|id| world.robot(*id).map(|r| (r.pose, [r.wheel_speeds.left, r.wheel_speeds.right])))
        .collect::<Option<Vec<_>>>()?;
    let o = world.object(object)?.pose;
    Some(encode(world.arena, &rs, o, goal))
}

/// State from a recorded frame; wheel speeds are not recorded and read 0.
pub fn frame_state(frame: &Frame, arena: Arena, robots: &[EntityId], object: EntityId, goal: Vec2) -> Option<StateVector> {
    let rs = robots
        .iter()
        .map(|id| frame.entity(*id).map(|e| (e.pose(), [0.0, 0.0])))
        .collect::<Option<Vec<_>>>()?;
    let o = frame.entity(object)?.pose();
    Some(encode(arena, &rs, o, goal))
}
