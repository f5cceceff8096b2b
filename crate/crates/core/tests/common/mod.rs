#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrlfd::geometry::Shape;
use mrlfd::sim::EntityId;
use mrlfd::trace::{DemoTrace, EntityKind, Frame, TraceEntity};

pub const ROBOT_R: f64 = 0.025;

/// Random-walk trace over a small patch so contacts and proximity toggle
/// often. Some objects are absent for a stretch of frames.
pub fn random_trace(seed: u64) -> DemoTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(10..60);
    let robots = rng.random_range(1..=4u32);
    let objects = rng.random_range(0..=3u32);
    let mut ents: Vec<(TraceEntity, Option<(usize, usize)>)> = Vec::new();
    for i in 0..robots + objects {
        let robot = i < robots;
        let id = if robot { i + 1 } else { 101 + i - robots };
        let radius = if robot { ROBOT_R } else { rng.random_range(0.015..0.05) };
        let absent = (!robot && rng.random_bool(0.4)).then(|| {
            let a = rng.random_range(0..n);
            (a, rng.random_range(a..=n))
        });
        ents.push((
            TraceEntity {
                id: EntityId(id),
                kind: if robot { EntityKind::Robot } else { EntityKind::Object },
                x: rng.random_range(0.4..0.6),
                y: rng.random_range(0.4..0.6),
                theta: rng.random_range(-3.0..3.0),
                shape: Shape::Circle { radius },
                color: if robot { "gray".into() } else { "red".into() },
            },
            absent,
        ));
    }
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let mut entities = Vec::new();
        for (e, absent) in &mut ents {
            e.x = (e.x + rng.random_range(-0.02..0.02)).clamp(0.3, 0.7);
            e.y = (e.y + rng.random_range(-0.02..0.02)).clamp(0.3, 0.7);
            e.theta = mrlfd::geometry::wrap_angle(e.theta + rng.random_range(-0.2..0.2));
            if absent.is_some_and(|(a, b)| (a..b).contains(&k)) {
                continue;
            }
            entities.push(e.clone());
        }
        // listing order carries no meaning
        if rng.random_bool(0.5) {
            entities.reverse();
        }
        frames.push(Frame { index: k, t: k as f64 * 0.1, entities, label: None });
    }
    DemoTrace { task_name: "random".into(), dt: 0.1, frames }
}

pub fn radius(e: &TraceEntity) -> f64 {
    match e.shape {
        Shape::Circle { radius } => radius,
        Shape::Rectangle { .. } => panic!("random traces hold circles only"),
    }
}

pub fn center_gap(a: &TraceEntity, b: &TraceEntity) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

pub fn boundary_gap(a: &TraceEntity, b: &TraceEntity) -> f64 {
    (center_gap(a, b) - radius(a) - radius(b)).max(0.0)
}
