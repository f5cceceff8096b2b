//! Per-frame interaction features computed from ground-truth traces.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Body, Vec2};
use crate::sim::EntityId;
use crate::trace::{DemoTrace, EntityKind, Frame, TraceEntity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Boundary distance at or below which two bodies touch.
    pub contact: f64,
    /// Center distance at or below which two robots interact.
    pub proximity: f64,
    /// Mean speed (m/s) above which an entity counts as moving.
    pub motion_speed: f64,
    /// Trailing window length in frames for the motion flag.
    pub window: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { contact: 0.005, proximity: 0.12, motion_speed: 0.005, window: 5 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("motion window {window} exceeds trace length {frames}")]
    WindowTooLarge { window: usize, frames: usize },
    #[error("motion window must be at least 1")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFeatures {
    pub frame_index: usize,
    /// Row/column order of the matrices, ascending by id.
    pub robots: Vec<EntityId>,
    pub objects: Vec<EntityId>,
    pub phi: Vec<Vec<bool>>,
    pub psi: Vec<Vec<bool>>,
    pub omega: Vec<Vec<bool>>,
    pub motion: BTreeMap<EntityId, bool>,
    pub appear: BTreeSet<EntityId>,
    pub disappear: BTreeSet<EntityId>,
}

impl InteractionFeatures {
    fn idx(list: &[EntityId], id: EntityId) -> Option<usize> {
        list.binary_search(&id).ok()
    }

    pub fn phi_of(&self, robot: EntityId, object: EntityId) -> Option<bool> {
        Some(self.phi[Self::idx(&self.robots, robot)?][Self::idx(&self.objects, object)?])
    }

    pub fn psi_of(&self, a: EntityId, b: EntityId) -> Option<bool> {
        Some(self.psi[Self::idx(&self.objects, a)?][Self::idx(&self.objects, b)?])
    }

    pub fn omega_of(&self, a: EntityId, b: EntityId) -> Option<bool> {
        Some(self.omega[Self::idx(&self.robots, a)?][Self::idx(&self.robots, b)?])
    }

    pub fn moving(&self, id: EntityId) -> bool {
        self.motion.get(&id).copied().unwrap_or(false)
    }

    pub fn ids(&self) -> BTreeSet<EntityId> {
        self.robots.iter().chain(self.objects.iter()).copied().collect()
    }
}

pub fn body_of(e: &TraceEntity) -> Body {
    Body::new(e.pose(), e.shape)
}

fn sorted_ids(frame: &Frame, kind: EntityKind) -> Vec<EntityId> {
    let mut v: Vec<EntityId> = frame.entities.iter().filter(|e| e.kind == kind).map(|e| e.id).collect();
    v.sort();
    v
}

/// Contact and proximity matrices for one frame, without motion or events.
pub fn frame_interactions(frame: &Frame, th: &Thresholds) -> InteractionFeatures {
    let robots = sorted_ids(frame, EntityKind::Robot);
    let objects = sorted_ids(frame, EntityKind::Object);
    let get = |id: EntityId| frame.entity(id).expect("id taken from frame");
    let rb: Vec<Body> = robots.iter().map(|id| body_of(get(*id))).collect();
    let ob: Vec<Body> = objects.iter().map(|id| body_of(get(*id))).collect();
    let phi = rb
        .iter()
        .map(|r| ob.iter().map(|o| r.boundary_distance(o) <= th.contact).collect())
        .collect();
    let psi = (0..ob.len())
        .map(|i| (0..ob.len()).map(|j| i != j && ob[i].boundary_distance(&ob[j]) <= th.contact).collect())
        .collect();
    let omega = (0..rb.len())
        .map(|i| {
            (0..rb.len())
                .map(|j| i != j && (rb[i].pose.position() - rb[j].pose.position()).norm() <= th.proximity)
                .collect()
        })
        .collect();
    InteractionFeatures {
        frame_index: frame.index,
        robots,
        objects,
        phi,
        psi,
        omega,
        motion: BTreeMap::new(),
        appear: BTreeSet::new(),
        disappear: BTreeSet::new(),
    }
}

/// Net displacement between two observations, counting rotation at the
/// entity's bounding radius.
pub fn displacement(a: &TraceEntity, b: &TraceEntity) -> f64 {
    let lin = (Vec2::new(b.x, b.y) - Vec2::new(a.x, a.y)).norm();
    let ang = crate::geometry::wrap_angle(b.theta - a.theta).abs() * a.shape.bounding_radius();
    lin + ang
}

pub fn extract_features(trace: &DemoTrace, th: &Thresholds) -> Result<Vec<InteractionFeatures>, PerceptionError> {
    if th.window == 0 {
        return Err(PerceptionError::ZeroWindow);
    }
    if th.window > trace.frames.len() {
        return Err(PerceptionError::WindowTooLarge { window: th.window, frames: trace.frames.len() });
    }
    let threshold = th.motion_speed * trace.dt * th.window as f64;
    let mut out = Vec::with_capacity(trace.frames.len());
    let mut prev_ids: Option<BTreeSet<EntityId>> = None;
    for (k, frame) in trace.frames.iter().enumerate() {
        let mut f = frame_interactions(frame, th);
        let back = &trace.frames[k.saturating_sub(th.window)..=k];
        for e in &frame.entities {
            let earliest = back.iter().find_map(|b| b.entity(e.id)).unwrap_or(e);
            f.motion.insert(e.id, displacement(earliest, e) >= threshold);
        }
        let ids = frame.ids();
        if let Some(prev) = &prev_ids {
            f.appear = ids.difference(prev).copied().collect();
            f.disappear = prev.difference(&ids).copied().collect();
        }
        prev_ids = Some(ids);
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeGeometry {
    /// Object position minus robot position, keyed by (robot, object).
    pub ro: BTreeMap<(EntityId, EntityId), Vec2>,
    pub ao: BTreeMap<EntityId, Vec2>,
    /// Position of `b` minus position of `a`, keyed by (a, b).
    pub rr: BTreeMap<(EntityId, EntityId), Vec2>,
    pub ar: BTreeMap<EntityId, Vec2>,
}

pub fn relative_geometry(frame: &Frame) -> RelativeGeometry {
    let pos = |e: &TraceEntity| Vec2::new(e.x, e.y);
    let robots: Vec<&TraceEntity> = frame.robots().collect();
    let objects: Vec<&TraceEntity> = frame.objects().collect();
    let mut g = RelativeGeometry {
        ro: BTreeMap::new(),
        ao: BTreeMap::new(),
        rr: BTreeMap::new(),
        ar: BTreeMap::new(),
    };
    for o in &objects {
        g.ao.insert(o.id, pos(o));
    }
    for r in &robots {
        g.ar.insert(r.id, pos(r));
        for o in &objects {
            g.ro.insert((r.id, o.id), pos(o) - pos(r));
        }
        for b in &robots {
            if b.id != r.id {
                g.rr.insert((r.id, b.id), pos(b) - pos(r));
            }
        }
    }
    g
}

/// Writes one feature record per line.
pub fn features_to_jsonl(features: &[InteractionFeatures]) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for f in features {
        out.push_str(&serde_json::to_string(f)?);
        out.push('\n');
    }
    Ok(out)
}
