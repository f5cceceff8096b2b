use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{wrap_angle, Pose2D, Shape, Vec2};

use super::{EntityId, RobotState, SimError, WheelSpeeds, WorldState};

/// Unordered entity pair, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContactPair(pub EntityId, pub EntityId);

impl ContactPair {
    pub fn new(a: EntityId, b: EntityId) -> Self {
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn contains(&self, id: EntityId) -> bool {
        self.0 == id || self.1 == id
    }
}

/// All entity pairs whose boundaries are within the world's contact slack.
pub fn detect_contacts(world: &WorldState) -> BTreeSet<ContactPair> {
    let slack = world.params.contact_slack;
    let bodies: Vec<_> = world.entities().map(|e| (e.id(), e.body())).collect();
    let mut out = BTreeSet::new();
    for i in 0..bodies.len() {
        for j in (i + 1)..bodies.len() {
            if bodies[i].1.boundary_distance(&bodies[j].1) <= slack {
                out.insert(ContactPair::new(bodies[i].0, bodies[j].0));
            }
        }
    }
    out
}

/// Whether `robot` touches `entity` (boundary distance within the contact slack).
pub fn robot_in_contact(world: &WorldState, robot: EntityId, entity: EntityId) -> bool {
    match (world.entity(robot), world.entity(entity)) {
        (Some(r), Some(e)) => r.body().boundary_distance(&e.body()) <= world.params.contact_slack,
        _ => false,
    }
}

struct ContactInfo {
    robot: usize,
    /// Unit normal pointing from the robot into the object.
    normal: Vec2,
    velocity: Vec2,
    gap: f64,
}

/// Advances the world by `dt` seconds. Robots without an entry in `actions`
/// are commanded to stop; speeds are clamped to `±v_max`.
pub fn step(
    world: &WorldState,
    actions: &BTreeMap<EntityId, WheelSpeeds>,
    dt: f64,
) -> Result<WorldState, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::BadTimeStep(dt));
    }
    for (id, speeds) in actions {
        if world.robot(*id).is_none() {
            return Err(SimError::UnknownRobot(*id));
        }
        if !speeds.is_finite() {
            return Err(SimError::NonFinite(format!("wheel speeds for robot {id}")));
        }
    }
    let slack = world.params.contact_slack;
    let v_max = world.params.v_max;
    let mut next = world.clone();
    for r in &mut next.robots {
        r.wheel_speeds = actions.get(&r.id).copied().unwrap_or(WheelSpeeds::STOP).clamped(v_max);
    }

    // Object motion is decided from pre-step contacts.
    let mut object_moves = Vec::with_capacity(world.objects.len());
    let mut sliding: Vec<(usize, usize, f64)> = Vec::new();
    for (oi, obj) in world.objects.iter().enumerate() {
        let body = obj.body();
        let center = obj.pose.position();
        let mut contacts = Vec::new();
        for (ri, r) in next.robots.iter().enumerate() {
            let gap = body.boundary_distance(&r.body());
            if gap > slack {
                continue;
            }
            let normal = -body.outward_normal_toward(r.pose.position());
            let velocity = r.pose.heading() * r.wheel_speeds.linear();
            contacts.push(ContactInfo { robot: ri, normal, velocity, gap });
        }
        for c in &contacts {
            if c.velocity.dot(c.normal) >= 0.0 && obj.movable {
                sliding.push((c.robot, oi, c.gap));
            }
        }
        if !obj.movable {
            object_moves.push((Vec2::ZERO, 0.0));
            continue;
        }
        let pushes: Vec<Vec2> = contacts
            .iter()
            .filter_map(|c| {
                let vn = c.velocity.dot(c.normal);
                (vn > 0.0).then(|| c.normal * vn)
            })
            .collect();
        let mut delta = Vec2::ZERO;
        if !pushes.is_empty() && pushes.len() as u32 >= obj.required_pushers {
            let sum = pushes.iter().fold(Vec2::ZERO, |acc, p| acc + *p);
            delta = sum * (dt / pushes.len() as f64);
        }
        let mut dtheta = 0.0;
        if let Shape::Rectangle { width, height } = obj.shape {
            if contacts.len() >= 2 && contacts.len() as u32 >= obj.required_pushers.max(2) {
                let half_diag = 0.5 * width.hypot(height);
                dtheta = rotation_rate(&contacts, &next.robots, center, half_diag) * dt;
            }
        }
        object_moves.push((delta, dtheta));
    }

    for r in &mut next.robots {
        integrate_unicycle(r, dt);
    }
    let mut moved = vec![false; next.objects.len()];
    for (i, (delta, dtheta)) in object_moves.into_iter().enumerate() {
        if delta != Vec2::ZERO || dtheta != 0.0 {
            let o = &mut next.objects[i];
            o.pose = Pose2D::new(o.pose.x + delta.x, o.pose.y + delta.y, o.pose.theta + dtheta);
            moved[i] = true;
        }
    }

    // Robots that pressed on (or slid along) a movable object keep their
    // pre-step gap instead of drifting off the surface.
    for (ri, oi, gap_before) in sliding {
        let body = next.objects[oi].body();
        let r = &mut next.robots[ri];
        let gap = body.boundary_distance(&r.body());
        if gap > gap_before {
            let n = body.outward_normal_toward(r.pose.position());
            let p = r.pose.position() - n * (gap - gap_before);
            r.pose = Pose2D::new(p.x, p.y, r.pose.theta);
        }
    }

    resolve_overlaps(&mut next, &moved);
    clamp_to_arena(&mut next);
    next.time = world.time + dt;
    Ok(next)
}

fn rotation_rate(contacts: &[ContactInfo], robots: &[RobotState], center: Vec2, half_diag: f64) -> f64 {
    let tangential = |c: &ContactInfo| c.velocity - c.normal * c.velocity.dot(c.normal);
    for i in 0..contacts.len() {
        for j in (i + 1)..contacts.len() {
            let (a, b) = (&contacts[i], &contacts[j]);
            let ra = robots[a.robot].pose.position() - center;
            let rb = robots[b.robot].pose.position() - center;
            if ra.dot(rb) >= 0.0 {
                continue;
            }
            let (ta, tb) = (tangential(a), tangential(b));
            if ta.dot(tb) >= 0.0 {
                continue;
            }
            let (sa, sb) = (ra.cross(ta), rb.cross(tb));
            if sa * sb <= 0.0 {
                continue;
            }
            let speed = 0.5 * (ta.norm() + tb.norm());
            return sa.signum() * speed / half_diag;
        }
    }
    0.0
}

fn integrate_unicycle(r: &mut RobotState, dt: f64) {
    let v = r.wheel_speeds.linear();
    let w = r.wheel_speeds.angular(r.wheel_base);
    let th = r.pose.theta;
    let (x, y) = if w.abs() < 1e-12 {
        (r.pose.x + v * th.cos() * dt, r.pose.y + v * th.sin() * dt)
    } else {
        let th1 = th + w * dt;
        (
            r.pose.x + v / w * (th1.sin() - th.sin()),
            r.pose.y - v / w * (th1.cos() - th.cos()),
        )
    };
    // Exact zero linear speed keeps the position bit-identical.
    let (x, y) = if v == 0.0 { (r.pose.x, r.pose.y) } else { (x, y) };
    r.pose = Pose2D { x, y, theta: wrap_angle(th + w * dt) };
}

fn resolve_overlaps(world: &mut WorldState, moved: &[bool]) {
    for _ in 0..3 {
        // Robots are pushed out of objects.
        for r in &mut world.robots {
            for o in &world.objects {
                let body = o.body();
                let d = body.boundary_distance(&r.body());
                if d < 0.0 {
                    let n = body.outward_normal_toward(r.pose.position());
                    let p = r.pose.position() + n * (-d);
                    r.pose = Pose2D { x: p.x, y: p.y, theta: r.pose.theta };
                }
            }
        }
        // Robot pairs split the overlap.
        for i in 0..world.robots.len() {
            for j in (i + 1)..world.robots.len() {
                let (a, b) = (world.robots[i].body(), world.robots[j].body());
                let d = a.boundary_distance(&b);
                if d < 0.0 {
                    let n = (b.pose.position() - a.pose.position())
                        .normalized()
                        .unwrap_or(Vec2::new(1.0, 0.0));
                    let shift = n * (-0.5 * d);
                    let pa = world.robots[i].pose.position() - shift;
                    let pb = world.robots[j].pose.position() + shift;
                    world.robots[i].pose = Pose2D { x: pa.x, y: pa.y, ..world.robots[i].pose };
                    world.robots[j].pose = Pose2D { x: pb.x, y: pb.y, ..world.robots[j].pose };
                }
            }
        }
        // Objects that moved this step are blocked by other objects.
        for i in 0..world.objects.len() {
            for j in 0..world.objects.len() {
                if i == j || !moved[i] {
                    continue;
                }
                let (a, b) = (world.objects[i].body(), world.objects[j].body());
                let d = a.boundary_distance(&b);
                if d < 0.0 {
                    let share = if moved[j] { 0.5 } else { 1.0 };
                    let n = (a.pose.position() - b.pose.position())
                        .normalized()
                        .unwrap_or(Vec2::new(1.0, 0.0));
                    let p = a.pose.position() + n * (-d * share);
                    world.objects[i].pose = Pose2D { x: p.x, y: p.y, ..world.objects[i].pose };
                }
            }
        }
    }
}

fn clamp_to_arena(world: &mut WorldState) {
    let arena = world.arena;
    let clamp = |pose: &mut Pose2D, half: Vec2| {
        let hx = half.x.min(0.5 * arena.width);
        let hy = half.y.min(0.5 * arena.height);
        pose.x = pose.x.clamp(hx, arena.width - hx);
        pose.y = pose.y.clamp(hy, arena.height - hy);
    };
    for r in &mut world.robots {
        let rad = r.body_radius;
        clamp(&mut r.pose, Vec2::new(rad, rad));
    }
    for o in &mut world.objects {
        let half = o.shape.aabb_half_extents(o.pose.theta);
        clamp(&mut o.pose, half);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Arena, EntityId, ObjectState, RobotState};

    fn world_with(robots: Vec<RobotState>, objects: Vec<ObjectState>) -> WorldState {
        let mut w = WorldState::empty(Arena::default());
        w.robots = robots;
        w.objects = objects;
        w
    }

    fn act(id: u32, l: f64, r: f64) -> BTreeMap<EntityId, WheelSpeeds> {
        BTreeMap::from([(EntityId(id), WheelSpeeds::new(l, r))])
    }

    #[test]
    fn straight_line() {
        let w = world_with(vec![RobotState::new(EntityId(1), Pose2D::new(0.5, 0.5, 0.0))], vec![]);
        let n = step(&w, &act(1, 0.1, 0.1), 0.1).unwrap();
        let p = n.robots[0].pose;
        assert!((p.x - 0.51).abs() < 1e-12 && (p.y - 0.5).abs() < 1e-12 && p.theta == 0.0);
        assert!((n.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn spin_in_place() {
        let w = world_with(vec![RobotState::new(EntityId(1), Pose2D::new(0.5, 0.5, 0.0))], vec![]);
        let n = step(&w, &act(1, 0.1, -0.1), 0.1).unwrap();
        let p = n.robots[0].pose;
        assert_eq!((p.x, p.y), (0.5, 0.5));
        assert!((p.theta + 0.5).abs() < 1e-12);
    }

    #[test]
    fn push_disk_along_normal() {
        // Robot touching a disk (gap 0) drives straight into it.
        let robot = RobotState::new(EntityId(1), Pose2D::new(0.5, 0.5, 0.0));
        let disk = ObjectState {
            id: EntityId(2),
            pose: Pose2D::new(0.5 + 0.025 + 0.03, 0.5, 0.0),
            shape: Shape::Circle { radius: 0.03 },
            color: "red".into(),
            movable: true,
            required_pushers: 1,
        };
        let w = world_with(vec![robot], vec![disk]);
        let n = step(&w, &act(1, 0.1, 0.1), 0.1).unwrap();
        let o = n.objects[0].pose;
        assert!((o.x - (0.555 + 0.01)).abs() < 1e-12);
        assert!((o.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_pushers_required() {
        let robot = RobotState::new(EntityId(1), Pose2D::new(0.5, 0.5, 0.0));
        let disk = ObjectState {
            id: EntityId(2),
            pose: Pose2D::new(0.555, 0.5, 0.0),
            shape: Shape::Circle { radius: 0.03 },
            color: "red".into(),
            movable: true,
            required_pushers: 2,
        };
        let w = world_with(vec![robot], vec![disk]);
        let n = step(&w, &act(1, 0.1, 0.1), 0.1).unwrap();
        assert_eq!(n.objects[0].pose.x, 0.555);
        // The robot is stopped by the object instead of passing through it.
        assert!(n.robots[0].body().boundary_distance(&n.objects[0].body()) >= -1e-12);
    }

    #[test]
    fn antiparallel_pushers_rotate_rectangle() {
        let rect = ObjectState {
            id: EntityId(10),
            pose: Pose2D::new(0.75, 0.5, 0.0),
            shape: Shape::Rectangle { width: 0.16, height: 0.05 },
            color: "blue".into(),
            movable: true,
            required_pushers: 2,
        };
        // Robots at the two short edges, driving in opposite y directions.
        let a = RobotState::new(EntityId(1), Pose2D::new(0.75 + 0.08 + 0.025, 0.5, std::f64::consts::FRAC_PI_2));
        let b = RobotState::new(EntityId(2), Pose2D::new(0.75 - 0.08 - 0.025, 0.5, -std::f64::consts::FRAC_PI_2));
        let w = world_with(vec![a, b], vec![rect]);
        let mut actions = act(1, 0.1, 0.1);
        actions.insert(EntityId(2), WheelSpeeds::new(0.1, 0.1));
        let n = step(&w, &actions, 0.1).unwrap();
        let half_diag = 0.5 * 0.16f64.hypot(0.05);
        let expected = 0.1 / half_diag * 0.1;
        assert!((n.objects[0].pose.theta - expected).abs() < 1e-9, "{}", n.objects[0].pose.theta);
        assert!((n.objects[0].pose.x - 0.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_actions() {
        let w = world_with(vec![RobotState::new(EntityId(1), Pose2D::new(0.5, 0.5, 0.0))], vec![]);
        assert_eq!(step(&w, &act(7, 0.1, 0.1), 0.1), Err(SimError::UnknownRobot(EntityId(7))));
        assert!(matches!(step(&w, &act(1, f64::NAN, 0.1), 0.1), Err(SimError::NonFinite(_))));
        assert!(matches!(step(&w, &act(1, 0.1, 0.1), 0.0), Err(SimError::BadTimeStep(_))));
    }

    #[test]
    fn contact_examples() {
        let mk = |x: f64| {
            ObjectState {
                id: EntityId(2),
                pose: Pose2D::new(x, 0.5, 0.0),
                shape: Shape::Circle { radius: 0.025 },
                color: "red".into(),
                movable: true,
                required_pushers: 1,
            }
        };
        let mut a = mk(0.5);
        a.id = EntityId(1);
        let w = world_with(vec![], vec![a.clone(), mk(0.549)]);
        assert!(detect_contacts(&w).contains(&ContactPair::new(EntityId(1), EntityId(2))));
        let w = world_with(vec![], vec![a, mk(0.561)]);
        assert!(detect_contacts(&w).is_empty());
    }
}
