//! Planar vectors, poses and the handful of shape distance queries the
//! simulator and perception layers need.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; keep the half-open interval exact.
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Planar pose; `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Maps a point given in this pose's frame to the world frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.theta)
    }

    /// Maps a world point into this pose's frame.
    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.theta)
    }

    /// Composes `self ∘ local`.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.transform_point(local.position());
        Pose2D::new(p.x, p.y, self.theta + local.theta)
    }

    /// The pose of `world` expressed in this pose's frame.
    pub fn relative(&self, world: &Pose2D) -> Pose2D {
        let p = self.inverse_transform_point(world.position());
        Pose2D::new(p.x, p.y, world.theta - self.theta)
    }
}

/// Geometric footprint of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Circle { radius: f64 },
    Rectangle { width: f64, height: f64 },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Circle { radius } => radius.is_finite() && radius > 0.0,
            Shape::Rectangle { width, height } => {
                width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0
            }
        }
    }

    /// Radius of the smallest enclosing circle about the center.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Circle { radius } => radius,
            Shape::Rectangle { width, height } => 0.5 * width.hypot(height),
        }
    }

    /// Half extents of the axis-aligned bounding box at heading `theta`.
    pub fn aabb_half_extents(&self, theta: f64) -> Vec2 {
        match *self {
            Shape::Circle { radius } => Vec2::new(radius, radius),
            Shape::Rectangle { width, height } => {
                let (s, c) = theta.sin_cos();
                Vec2::new(
                    0.5 * width * c.abs() + 0.5 * height * s.abs(),
                    0.5 * width * s.abs() + 0.5 * height * c.abs(),
                )
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Circle { .. } => "circle",
            Shape::Rectangle { .. } => "rectangle",
        }
    }
}

/// A shape placed in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub pose: Pose2D,
    pub shape: Shape,
}

impl Body {
    pub fn new(pose: Pose2D, shape: Shape) -> Self {
        Self { pose, shape }
    }

    fn rect_corners(&self) -> [Vec2; 4] {
        let Shape::Rectangle { width, height } = self.shape else {
            unreachable!("rect_corners on a circle")
        };
        let (hw, hh) = (0.5 * width, 0.5 * height);
        [
            self.pose.transform_point(Vec2::new(hw, hh)),
            self.pose.transform_point(Vec2::new(-hw, hh)),
            self.pose.transform_point(Vec2::new(-hw, -hh)),
            self.pose.transform_point(Vec2::new(hw, -hh)),
        ]
    }

    /// Signed distance from a point to this body's boundary (negative inside).
    pub fn signed_distance_to_point(&self, p: Vec2) -> f64 {
        match self.shape {
            Shape::Circle { radius } => (p - self.pose.position()).norm() - radius,
            Shape::Rectangle { width, height } => {
                let local = self.pose.inverse_transform_point(p);
                let dx = local.x.abs() - 0.5 * width;
                let dy = local.y.abs() - 0.5 * height;
                let outside = Vec2::new(dx.max(0.0), dy.max(0.0)).norm();
                outside + dx.max(dy).min(0.0)
            }
        }
    }

    /// Closest point of the body's boundary to `p`.
    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        match self.shape {
            Shape::Circle { radius } => {
                let c = self.pose.position();
                let dir = (p - c).normalized().unwrap_or(Vec2::new(1.0, 0.0));
                c + dir * radius
            }
            Shape::Rectangle { width, height } => {
                let (hw, hh) = (0.5 * width, 0.5 * height);
                let local = self.pose.inverse_transform_point(p);
                let clamped = Vec2::new(local.x.clamp(-hw, hw), local.y.clamp(-hh, hh));
                let q = if local.x.abs() <= hw && local.y.abs() <= hh {
                    // Inside: push to the nearest edge.
                    if hw - local.x.abs() < hh - local.y.abs() {
                        Vec2::new(hw * local.x.signum_or_one(), local.y)
                    } else {
                        Vec2::new(local.x, hh * local.y.signum_or_one())
                    }
                } else {
                    clamped
                };
                self.pose.transform_point(q)
            }
        }
    }

    /// Outward unit normal of this body at the boundary point closest to `p`.
    pub fn outward_normal_toward(&self, p: Vec2) -> Vec2 {
        let q = self.closest_boundary_point(p);
        let inside = self.signed_distance_to_point(p) < 0.0;
        let dir = if inside { q - p } else { p - q };
        dir.normalized()
            .or_else(|| (p - self.pose.position()).normalized())
            .unwrap_or(Vec2::new(1.0, 0.0))
    }

    /// Signed boundary-to-boundary distance; negative means penetration
    /// (exact for circle pairs and circle/rectangle, penetration depth along
    /// the minimum separating axis for rectangle pairs).
    pub fn boundary_distance(&self, other: &Body) -> f64 {
        match (self.shape, other.shape) {
            (Shape::Circle { radius: r1 }, Shape::Circle { radius: r2 }) => {
                (self.pose.position() - other.pose.position()).norm() - r1 - r2
            }
            (Shape::Circle { radius }, Shape::Rectangle { .. }) => {
                other.signed_distance_to_point(self.pose.position()) - radius
            }
            (Shape::Rectangle { .. }, Shape::Circle { radius }) => {
                self.signed_distance_to_point(other.pose.position()) - radius
            }
            (Shape::Rectangle { .. }, Shape::Rectangle { .. }) => rect_rect_distance(self, other),
        }
    }
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}

impl SignumOrOne for f64 {
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab).max(1e-18)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn rect_rect_distance(a: &Body, b: &Body) -> f64 {
    let ca = a.rect_corners();
    let cb = b.rect_corners();
    // Separating axis test; the smallest overlap is the penetration depth.
    let axes = [
        a.pose.heading(),
        a.pose.heading().perp(),
        b.pose.heading(),
        b.pose.heading().perp(),
    ];
    let mut min_overlap = f64::INFINITY;
    for axis in axes {
        let (amin, amax) = project(&ca, axis);
        let (bmin, bmax) = project(&cb, axis);
        let overlap = amax.min(bmax) - amin.max(bmin);
        if overlap <= 0.0 {
            min_overlap = f64::NEG_INFINITY;
            break;
        }
        min_overlap = min_overlap.min(overlap);
    }
    if min_overlap.is_finite() {
        return -min_overlap;
    }
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a0, a1) = (ca[i], ca[(i + 1) % 4]);
        let (b0, b1) = (cb[i], cb[(i + 1) % 4]);
        for p in &cb {
            best = best.min(point_segment_distance(*p, a0, a1));
        }
        for p in &ca {
            best = best.min(point_segment_distance(*p, b0, b1));
        }
    }
    best
}

fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let d = c.dot(axis);
        (lo.min(d), hi.max(d))
    })
}
