//! Single TOML configuration document. Every section is optional and falls
//! back to the library defaults; unknown keys are rejected.
//!
//! ```toml
//! seed = 0
//!
//! [perception]          # contact / proximity / motion thresholds
//! contact = 0.005
//!
//! [inference]
//! debounce = 2
//! corpus_per_class = 60
//!
//! [exec.gains]          # PD gains of the a priori skills
//! k_p_lin = 1.2
//!
//! [classifier]
//! demos = 50
//!
//! [train.weights]       # reward weights w1, w2, w3
//! w1 = 1.0
//!
//! [train.hyper]         # SAC hyperparameters
//! batch = 256
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use mrlfd::exec::ExecConfig;
use mrlfd::inference::tree::TreeParams;
use mrlfd::inference::InferOptions;
use mrlfd::learn::{ClassifierParams, DatasetParams, TrainConfig};
use mrlfd::perception::Thresholds;
use mrlfd::sim::ScenarioParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config value out of range: {0}")]
    Range(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub debounce: usize,
    /// Synthetic descriptors per skill class used to fit the tree.
    pub corpus_per_class: usize,
    pub corpus_seed: u64,
    pub tree: TreeParams,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self { debounce: InferOptions::default().debounce, corpus_per_class: 60, corpus_seed: 1, tree: TreeParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    /// Scripted transport demonstrations used for training.
    pub demos: usize,
    pub dataset: DatasetParams,
    pub params: ClassifierParams,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self { demos: 50, dataset: DatasetParams::default(), params: ClassifierParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub seeds: Vec<u64>,
    pub budget: usize,
    /// Stop a run once evaluation reaches this success rate.
    pub stop_at: f64,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2], budget: 150_000, stop_at: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    /// Wall-clock pause between streamed simulator steps.
    pub tick_ms: u64,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), tick_ms: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub perception: Thresholds,
    pub inference: InferenceSection,
    pub scenario: ScenarioParams,
    pub exec: ExecConfig,
    pub classifier: ClassifierSection,
    pub train: TrainConfig,
    pub ablation: AblationSection,
    pub server: ServerSection,
}

fn check(ok: bool, what: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range(what.into()))
    }
}

fn unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn infer_options(&self) -> InferOptions {
        InferOptions { thresholds: self.perception, debounce: self.inference.debounce }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.perception;
        check(p.contact.is_finite() && p.contact >= 0.0, "perception.contact must be >= 0")?;
        check(p.proximity.is_finite() && p.proximity > 0.0, "perception.proximity must be > 0")?;
        check(p.motion_speed.is_finite() && p.motion_speed >= 0.0, "perception.motion_speed must be >= 0")?;
        check(p.window >= 1, "perception.window must be >= 1")?;
        check(self.inference.corpus_per_class >= 1, "inference.corpus_per_class must be >= 1")?;
        check(self.inference.tree.max_depth >= 1, "inference.tree.max_depth must be >= 1")?;
        check(self.inference.tree.min_samples_split >= 2, "inference.tree.min_samples_split must be >= 2")?;
        check(self.exec.gains.is_valid(), "exec.gains must be finite, non-negative and not all zero")?;
        check(self.exec.step_budget >= 1 && self.exec.entry_budget >= 1, "exec budgets must be >= 1")?;

        let c = &self.classifier;
        check(c.demos >= 2, "classifier.demos must be >= 2")?;
        check(c.dataset.k_pos >= 1, "classifier.dataset.k_pos must be >= 1")?;
        check(
            c.dataset.shift_min > 0.0 && c.dataset.shift_min < c.dataset.shift_max && c.dataset.shift_max.is_finite(),
            "classifier.dataset needs 0 < shift_min < shift_max",
        )?;
        check((0.0..1.0).contains(&c.params.split), "classifier.params.split must be in [0, 1)")?;
        check(c.params.epochs >= 1 && c.params.hidden >= 1, "classifier epochs and hidden must be >= 1")?;
        check(c.params.lr > 0.0 && c.params.lr.is_finite(), "classifier.params.lr must be > 0")?;
        check(c.params.l2 >= 0.0 && c.params.l2.is_finite(), "classifier.params.l2 must be >= 0")?;

        let t = &self.train;
        t.weights.validate().map_err(|e| ConfigError::Range(format!("train.weights: {e}")))?;
        check(t.budget >= 1, "train.budget must be >= 1")?;
        check(t.eval_episodes >= 1, "train.eval_episodes must be >= 1")?;
        check(t.update_every >= 1, "train.update_every must be >= 1")?;
        check(t.stop_at.is_none_or(unit), "train.stop_at must be in [0, 1]")?;
        let h = &t.hyper;
        check(h.gamma > 0.0 && h.gamma <= 1.0, "train.hyper.gamma must be in (0, 1]")?;
        check(h.tau > 0.0 && h.tau <= 1.0, "train.hyper.tau must be in (0, 1]")?;
        check(h.lr > 0.0 && h.lr.is_finite(), "train.hyper.lr must be > 0")?;
        check(h.batch >= 2 && h.buffer >= h.batch, "train.hyper needs batch >= 2 and buffer >= batch")?;
        check(h.init_alpha > 0.0 && h.init_alpha.is_finite(), "train.hyper.init_alpha must be > 0")?;
        check(h.hidden >= 1, "train.hyper.hidden must be >= 1")?;
        check(h.target_entropy.is_none_or(f64::is_finite), "train.hyper.target_entropy must be finite")?;
        let e = &t.env;
        check(e.goal_min > 0.0 && e.goal_min < e.goal_max, "train.env needs 0 < goal_min < goal_max")?;
        check(e.success_tol > 0.0 && e.lost_gap > 0.0, "train.env tolerances must be > 0")?;
        check(e.max_steps >= 1 && e.sustain >= 1, "train.env max_steps and sustain must be >= 1")?;
        check(e.margin > 0.0 && e.margin < 0.5, "train.env.margin must be in (0, 0.5)")?;

        check(!self.ablation.seeds.is_empty(), "ablation.seeds must not be empty")?;
        check(self.ablation.budget >= 1, "ablation.budget must be >= 1")?;
        check(unit(self.ablation.stop_at), "ablation.stop_at must be in [0, 1]")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn partial_sections_override() {
        let c = Config::parse("seed = 4\n[train.weights]\nw2 = 0.2\n[exec.gains]\nk_p_lin = 2.0\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.weights.w2, 0.2);
        assert_eq!(c.train.weights.w1, 1.0);
        assert_eq!(c.exec.gains.k_p_lin, 2.0);
        assert_eq!(c.exec.gains.k_p_ang, ExecConfig::default().gains.k_p_ang);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::parse("sed = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::parse("[train.hyper]\nbatchsize = 3"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn out_of_range_rejected() {
        for doc in [
            "[train.weights]\nw1 = 0.0",
            "[train.hyper]\ngamma = 1.5",
            "[perception]\nwindow = 0",
            "[classifier.params]\nsplit = 1.0",
            "[train.env]\ngoal_min = 0.4\ngoal_max = 0.3",
            "[ablation]\nseeds = []",
        ] {
            assert!(matches!(Config::parse(doc), Err(ConfigError::Range(_))), "{doc}");
        }
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&Config::default()).unwrap();
        assert_eq!(Config::parse(&text).unwrap(), Config::default());
    }
}
