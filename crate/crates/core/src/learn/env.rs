//! Reduced push-to-goal task: one robot, one disk, an absolute goal.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2D, Shape, Vec2};
use crate::sim::robot_in_contact;
use crate::sim::scenario::{DISK_RADIUS, TRANSPORT_POS_TOL};
use crate::sim::{self, Arena, EntityId, ObjectState, RobotState, WheelSpeeds, WorldState, ROBOT_RADIUS, V_MAX};

use super::classifier::ClassifierModel;
use super::state::{state_vector, StateVector};
use super::{compute_reward, IkEvents, LearnError, RewardWeights};

pub const ROBOT: EntityId = EntityId(1);
pub const OBJECT: EntityId = EntityId(101);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushEnvConfig {
    pub goal_min: f64,
    pub goal_max: f64,
    pub max_steps: usize,
    /// Object-to-goal distance counted as success.
    pub success_tol: f64,
    /// Boundary gap that counts as losing the object after contact.
    pub lost_gap: f64,
    /// Consecutive classifier-positive steps that end an episode.
    pub sustain: usize,
    pub start_gap_max: f64,
    /// Spread of the robot's start bearing around the push line, radians.
    pub approach_spread: f64,
    pub heading_noise: f64,
    /// Distance of object and goal from the walls.
    pub margin: f64,
}

impl Default for PushEnvConfig {
    fn default() -> Self {
        Self {
            goal_min: 0.1,
            goal_max: 0.3,
            max_steps: 150,
            success_tol: TRANSPORT_POS_TOL,
            lost_gap: 0.05,
            sustain: 5,
            start_gap_max: 0.02,
            approach_spread: 0.35,
            heading_noise: 0.3,
            margin: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: StateVector,
    pub c_out: f64,
    pub events: IkEvents,
    pub reward: f64,
    /// Object within the success tolerance of the goal.
    pub success: bool,
    /// Classifier held its goal verdict for the sustain window.
    pub classifier_goal: bool,
    pub failed: bool,
    /// Step limit reached.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushEnv {
    pub cfg: PushEnvConfig,
    pub world: WorldState,
    pub goal: Vec2,
    pub steps: usize,
    contact_seen: bool,
    sustained: usize,
}

fn inside(p: Vec2, arena: &Arena, m: f64) -> bool {
    p.x >= m && p.x <= arena.width - m && p.y >= m && p.y <= arena.height - m
}

impl PushEnv {
    pub fn reset<R: Rng>(cfg: PushEnvConfig, rng: &mut R) -> Self {
        let arena = Arena::default();
        loop {
            let m = cfg.margin;
            let o = Vec2::new(rng.random_range(m..arena.width - m), rng.random_range(m..arena.height - m));
            let dir = Vec2::from_angle(rng.random_range(-PI..PI));
            let goal = o + dir * rng.random_range(cfg.goal_min..cfg.goal_max);
            if !inside(goal, &arena, m) {
                continue;
            }
            let bearing = dir.rotate(PI + rng.random_range(-cfg.approach_spread..=cfg.approach_spread));
            let reach = DISK_RADIUS + ROBOT_RADIUS + rng.random_range(0.0..=cfg.start_gap_max);
            let rp = o + bearing * reach;
            if !inside(rp, &arena, ROBOT_RADIUS + 0.01) {
                continue;
            }
            let heading = (o - rp).angle() + rng.random_range(-cfg.heading_noise..=cfg.heading_noise);
            let mut world = WorldState::empty(arena);
            world.robots.push(RobotState::new(ROBOT, Pose2D::new(rp.x, rp.y, heading)));
            world.objects.push(ObjectState {
                id: OBJECT,
                pose: Pose2D::new(o.x, o.y, 0.0),
                shape: Shape::Circle { radius: DISK_RADIUS },
                color: "red".into(),
                movable: true,
                required_pushers: 1,
            });
            return Self { cfg, world, goal, steps: 0, contact_seen: false, sustained: 0 };
        }
    }

    pub fn state(&self) -> StateVector {
        state_vector(&self.world, &[ROBOT], OBJECT, self.goal).expect("env entities present")
    }

    pub fn object_goal_distance(&self) -> f64 {
        self.world.object(OBJECT).map(|o| (o.pose.position() - self.goal).norm()).unwrap_or(f64::INFINITY)
    }

    fn gap(&self) -> f64 {
        match (self.world.robot(ROBOT), self.world.object(OBJECT)) {
            (Some(r), Some(o)) => r.body().boundary_distance(&o.body()),
            _ => f64::INFINITY,
        }
    }

    /// Applies a normalized wheel command. Without a classifier the goal
    /// probability reads 0.
    pub fn step(
        &mut self,
        action: &[f64],
        classifier: Option<&ClassifierModel>,
        weights: &RewardWeights,
    ) -> Result<StepOutcome, LearnError> {
        if action.len() != 2 || !action.iter().all(|a| a.is_finite()) {
            return Err(LearnError::Env(format!("bad action {action:?}")));
        }
        let cmd = WheelSpeeds::new(action[0].clamp(-1.0, 1.0) * V_MAX, action[1].clamp(-1.0, 1.0) * V_MAX);
        let actions = BTreeMap::from([(ROBOT, cmd)]);
        self.world = sim::step(&self.world, &actions, sim::DEFAULT_DT).map_err(|e| LearnError::Env(e.to_string()))?;
        self.steps += 1;
        let state = self.state();
        let c_out = match classifier {
            Some(c) => c.predict(&state)?,
            None => 0.0,
        };
        let mut events = IkEvents::default();
        if !self.contact_seen && robot_in_contact(&self.world, ROBOT, OBJECT) {
            self.contact_seen = true;
            events.reached = true;
        }
        if self.contact_seen && self.gap() > self.cfg.lost_gap {
            events.failed = true;
        }
        self.sustained = if c_out >= 0.5 { self.sustained + 1 } else { 0 };
        Ok(StepOutcome {
            reward: compute_reward(c_out, events, weights),
            state,
            c_out,
            events,
            success: self.object_goal_distance() <= self.cfg.success_tol,
            classifier_goal: self.sustained >= self.cfg.sustain.max(1),
            failed: events.failed,
            truncated: self.steps >= self.cfg.max_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reset_places_robot_behind_object() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let env = PushEnv::reset(PushEnvConfig::default(), &mut rng);
            let d = env.object_goal_distance();
            assert!((0.1..0.3).contains(&d));
            let r = env.world.robot(ROBOT).unwrap().pose.position();
            let o = env.world.object(OBJECT).unwrap().pose.position();
            assert!((o - r).dot(env.goal - o) > 0.0);
            assert!(env.gap() <= 0.02 + 1e-9 && env.gap() >= -1e-9);
            assert!(env.world.check().is_ok());
        }
    }

    #[test]
    fn driving_straight_pushes_and_losing_contact_fails() {
        let cfg = PushEnvConfig { approach_spread: 0.0, heading_noise: 0.0, start_gap_max: 0.0, ..Default::default() };
        let mut env = PushEnv::reset(cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let w = RewardWeights::default();
        let d0 = env.object_goal_distance();
        let first = env.step(&[1.0, 1.0], None, &w).unwrap();
        assert!(first.events.reached);
        assert!((first.reward - 0.05).abs() < 1e-12);
        for _ in 0..5 {
            env.step(&[1.0, 1.0], None, &w).unwrap();
        }
        assert!(env.object_goal_distance() < d0 - 0.05);
        let mut failed = false;
        for _ in 0..20 {
            let o = env.step(&[-1.0, -1.0], None, &w).unwrap();
            if o.failed {
                assert!((o.reward + 0.5).abs() < 1e-12);
                failed = true;
                break;
            }
        }
        assert!(failed);
    }

    #[test]
    fn rejects_bad_actions() {
        let mut env = PushEnv::reset(PushEnvConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        assert!(env.step(&[f64::NAN, 0.0], None, &RewardWeights::default()).is_err());
        assert!(env.step(&[0.0], None, &RewardWeights::default()).is_err());
    }
}
