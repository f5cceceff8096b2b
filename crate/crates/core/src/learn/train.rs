//! Episodic SAC training on the reduced push task and skill evaluation.

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::LearnedController;
use crate::geometry::Vec2;
use crate::inference::{PolicyEntry, SkillClass};
use crate::sim::{EntityId, WheelSpeeds, WorldState, V_MAX};

use super::classifier::ClassifierModel;
use super::env::{PushEnv, PushEnvConfig};
use super::replay::{ReplayBuffer, Transition};
use super::sac::{SacHyper, SacModel};
use super::state::{state_dim, state_vector};
use super::{LearnError, RewardWeights};

/// The learned skill being trained and whether its interaction predicate
/// is contact with the object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillContext {
    pub skill_id: String,
    pub contact_predicate: bool,
}

impl SkillContext {
    pub fn push() -> Self {
        Self { skill_id: "push".into(), contact_predicate: true }
    }

    /// First learned skill of a policy entry, if any.
    pub fn from_entry(entry: &PolicyEntry) -> Option<Self> {
        entry.skills.iter().find_map(|(robot, class)| match class {
            SkillClass::LearnedSkill(id) => Some(Self {
                skill_id: id.clone(),
                contact_predicate: entry.descriptor(*robot).map(|d| d.phi || d.derived.phi_start).unwrap_or(true),
            }),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Environment-step budget.
    pub budget: usize,
    /// Uniform-random steps before learning starts.
    pub warmup: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Stop once an evaluation reaches this success rate.
    pub stop_at: Option<f64>,
    pub weights: RewardWeights,
    pub hyper: SacHyper,
    pub env: PushEnvConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            budget: 200_000,
            warmup: 2_000,
            update_every: 1,
            eval_every: 5_000,
            eval_episodes: 30,
            eval_seed: 1_000_000,
            stop_at: None,
            weights: RewardWeights::default(),
            hyper: SacHyper::default(),
            env: PushEnvConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub episodes: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub eval_sr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Checkpoint with the best evaluation success rate.
    pub model: SacModel,
    pub best_sr: f64,
    pub best_step: usize,
    pub env_steps: usize,
    /// False when no evaluation ever succeeded.
    pub converged: bool,
    pub metrics: Vec<MetricRow>,
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("metric row serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillEval {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_final_distance: f64,
}

/// Deterministic-policy episodes on seeds `seed..seed + episodes`; an
/// episode succeeds once the object is within tolerance of the goal.
pub fn evaluate_skill(model: &SacModel, env: &PushEnvConfig, episodes: usize, seed: u64) -> Result<SkillEval, LearnError> {
    let w = RewardWeights::default();
    let mut successes = 0;
    let mut dist = 0.0;
    for e in 0..episodes as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + e);
        let mut envs = PushEnv::reset(*env, &mut rng);
        let mut s = envs.state();
        loop {
            let a = model.act(s.as_slice(), true, &mut rng)?;
            let o = envs.step(&a, None, &w)?;
            if o.success {
                successes += 1;
                break;
            }
            if o.failed || o.truncated {
                break;
            }
            s = o.state;
        }
        dist += envs.object_goal_distance();
    }
    let n = episodes.max(1) as f64;
    Ok(SkillEval { episodes, successes, success_rate: successes as f64 / n, mean_final_distance: dist / n })
}

/// Trains a single-robot push skill with classifier-shaped reward. Goal
/// and step-limit endings bootstrap; failures are terminal.
pub fn train_skill(
    ctx: &SkillContext,
    classifier: &ClassifierModel,
    cfg: &TrainConfig,
) -> Result<TrainReport, LearnError> {
    train_skill_observed(ctx, classifier, cfg, |_| ControlFlow::Continue(()))
}

/// [`train_skill`] reporting each evaluation row; `Break` stops training
/// early with the best checkpoint so far.
pub fn train_skill_observed(
    ctx: &SkillContext,
    classifier: &ClassifierModel,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&MetricRow) -> ControlFlow<()>,
) -> Result<TrainReport, LearnError> {
    cfg.weights.validate()?;
    let dim = state_dim(1);
    if classifier.input_dim() != dim {
        return Err(LearnError::Dimension { expected: dim, got: classifier.input_dim() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SacModel::new(dim, 1, cfg.hyper, rng.random());
    let mut buffer = ReplayBuffer::new(cfg.hyper.buffer);
    let mut env_cfg = cfg.env;
    if !ctx.contact_predicate {
        env_cfg.lost_gap = f64::INFINITY;
    }
    let mut env = PushEnv::reset(env_cfg, &mut rng);
    let mut s = env.state();
    let mut best: Option<(f64, usize, SacModel)> = None;
    let mut metrics = Vec::new();
    let mut episodes = 0;
    let mut last = (f64::NAN, f64::NAN);
    let mut steps = 0;
    while steps < cfg.budget {
        let a: Vec<f64> = if steps < cfg.warmup {
            (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()
        } else {
            model.act(s.as_slice(), false, &mut rng)?
        };
        let o = env.step(&a, Some(classifier), &cfg.weights)?;
        steps += 1;
        buffer.push(Transition {
            state: s.0.clone(),
            action: a,
            reward: o.reward,
            next_state: o.state.0.clone(),
            done: o.failed,
        });
        if o.failed || o.classifier_goal || o.truncated {
            episodes += 1;
            env = PushEnv::reset(env_cfg, &mut rng);
            s = env.state();
        } else {
            s = o.state;
        }
        if steps >= cfg.warmup && buffer.len() >= cfg.hyper.batch.max(2) && steps % cfg.update_every.max(1) == 0 {
            let batch = buffer.sample(cfg.hyper.batch, &mut rng);
            match model.update(&batch, &mut rng) {
                Ok(l) => last = (l.critic, l.actor),
                Err(LearnError::NonFinite(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let eval_due = cfg.eval_every > 0 && steps % cfg.eval_every == 0 && steps >= cfg.warmup;
        if eval_due || steps == cfg.budget {
            let ev = evaluate_skill(&model, &env_cfg, cfg.eval_episodes, cfg.eval_seed)?;
            metrics.push(MetricRow {
                step: steps,
                episodes,
                critic_loss: last.0,
                actor_loss: last.1,
                alpha: model.alpha(),
                eval_sr: Some(ev.success_rate),
            });
            if best.as_ref().is_none_or(|(sr, _, _)| ev.success_rate > *sr) {
                best = Some((ev.success_rate, steps, model.clone()));
            }
            let halt = observe(metrics.last().expect("row just pushed")).is_break();
            if halt || cfg.stop_at.is_some_and(|t| ev.success_rate >= t) {
                break;
            }
        }
    }
    let (best_sr, best_step, model) = best.unwrap_or((0.0, steps, model));
    Ok(TrainReport { model, best_sr, best_step, env_steps: steps, converged: best_sr > 0.0, metrics })
}

impl LearnedController for SacModel {
    /// Each robot acts on its own single-robot state with the matching
    /// actor, reusing the last actor when robots outnumber actors.
    fn act(&self, world: &WorldState, robots: &[EntityId], object: EntityId, goal: Vec2) -> Vec<WheelSpeeds> {
        robots
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let Some(s) = state_vector(world, &[*r], object, goal) else { return WheelSpeeds::STOP };
                match self.act_robot(i, s.as_slice()) {
                    Ok([l, rr]) => WheelSpeeds::new(l * V_MAX, rr * V_MAX),
                    Err(_) => WheelSpeeds::STOP,
                }
            })
            .collect()
    }
}
