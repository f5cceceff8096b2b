//! Contact-skill learning: a goal classifier used as a reward proxy, a
//! composite reward, and soft actor-critic with per-robot actors sharing
//! twin critics.

pub mod checkpoint;
pub mod classifier;
pub mod env;
pub mod nn;
pub mod replay;
pub mod sac;
pub mod state;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use classifier::{build_goal_dataset, train_classifier, ClassifierModel, ClassifierParams, DatasetParams, GoalExample};
pub use env::{PushEnv, PushEnvConfig, StepOutcome};
pub use replay::{ReplayBuffer, SharedReplay, Transition};
pub use sac::{SacHyper, SacLosses, SacModel};
pub use state::{state_vector, StateVector};
pub use train::{evaluate_skill, train_skill, train_skill_observed, MetricRow, SkillContext, TrainConfig, TrainReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("no demonstrations given")]
    NoDemos,
    #[error("demonstration {0} has {1} frames, fewer than required {2}")]
    ShortDemo(usize, usize, usize),
    #[error("dataset holds a single class")]
    SingleClass,
    #[error("state dimension {got} does not match model input {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite {0} loss; update aborted")]
    NonFinite(&'static str),
    #[error("batch needs at least 2 transitions, got {0}")]
    SmallBatch(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid reward weights: {0}")]
    Weights(String),
    #[error("environment: {0}")]
    Env(String),
}

/// Weights of the composite reward `w1·c + w2·[reached] − w3·[failed]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.05, w3: 0.5 }
    }
}

impl RewardWeights {
    pub const CLASSIFIER_ONLY: RewardWeights = RewardWeights { w1: 1.0, w2: 0.0, w3: 0.0 };
    /// Classifier term kept below one contact bonus over a whole episode.
    pub const IK_ONLY: RewardWeights = RewardWeights { w1: 1e-4, w2: 0.05, w3: 0.5 };

    pub fn validate(&self) -> Result<(), LearnError> {
        let ok = [self.w1, self.w2, self.w3].iter().all(|w| w.is_finite() && *w >= 0.0);
        if !ok {
            return Err(LearnError::Weights("weights must be finite and non-negative".into()));
        }
        if self.w1 <= 0.0 {
            return Err(LearnError::Weights("w1 must be positive".into()));
        }
        Ok(())
    }
}

/// Interaction events observed on one environment step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IkEvents {
    pub reached: bool,
    pub failed: bool,
}

pub fn compute_reward(c_out: f64, events: IkEvents, w: &RewardWeights) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    w.w1 * c_out + w.w2 * ind(events.reached) - w.w3 * ind(events.failed)
}
