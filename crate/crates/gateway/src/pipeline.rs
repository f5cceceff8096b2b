//! Batch pipeline stages shared by the CLI and the HTTP service.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use mrlfd::exec::{evaluate, EvalReport, ExecError, LearnedController, ScriptedPush, SkillRegistry};
use mrlfd::inference::corpus::generate_corpus;
use mrlfd::inference::{infer_policy, train_tree, DecisionTree, InferError, TaskPolicy};
use mrlfd::learn::classifier::transport_goal_demos;
use mrlfd::learn::{
    build_goal_dataset, train_classifier, train_skill, ClassifierModel, LearnError, RewardWeights, SacModel,
    SkillContext, TrainReport,
};
use mrlfd::sim::{SimError, TaskName};
use mrlfd::trace::{script_demo, validate, DemoTrace, TraceError};

use crate::config::Config;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad input: {0}")]
    Input(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

pub fn write(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

/// Fits the skill tree on the synthetic descriptor corpus.
pub fn build_tree(cfg: &Config) -> Result<DecisionTree> {
    let (corpus, _) = generate_corpus(cfg.inference.corpus_seed, cfg.inference.corpus_per_class);
    Ok(train_tree(&corpus, &cfg.inference.tree)?)
}

pub fn parse_tree(text: &str) -> Result<DecisionTree> {
    DecisionTree::from_json(text).map_err(|e| PipelineError::Input(format!("tree: {e}")))
}

pub fn parse_policy(text: &str) -> Result<TaskPolicy> {
    serde_json::from_str(text).map_err(|e| PipelineError::Input(format!("policy: {e}")))
}

pub fn demo_gen(task: TaskName, seed: u64, cfg: &Config) -> Result<DemoTrace> {
    Ok(script_demo(task, seed, &cfg.scenario)?)
}

/// Validates the trace, then infers its task policy.
pub fn infer(trace: &DemoTrace, tree: &DecisionTree, cfg: &Config) -> Result<TaskPolicy> {
    let v = validate(trace);
    if let Some(first) = v.first() {
        return Err(PipelineError::Input(format!("invalid trace ({} violations), first: {first}", v.len())));
    }
    Ok(infer_policy(trace, tree, &cfg.infer_options())?)
}

/// Goal classifier from scripted transport demonstrations on seeds
/// `seed..seed + demos`.
pub fn classifier(cfg: &Config, seed: u64) -> Result<ClassifierModel> {
    let demos = transport_goal_demos(cfg.classifier.demos, seed)?;
    let data = build_goal_dataset(&demos, &cfg.classifier.dataset)?;
    Ok(train_classifier(&data, &cfg.classifier.params)?)
}

pub fn parse_classifier(text: &str) -> Result<ClassifierModel> {
    Ok(ClassifierModel::from_checkpoint(&mrlfd::learn::Checkpoint::from_json(text)?)?)
}

pub fn parse_skill(text: &str) -> Result<SacModel> {
    Ok(SacModel::from_checkpoint(&mrlfd::learn::Checkpoint::from_json(text)?)?)
}

/// Controller used for every learned skill the policy references.
#[derive(Clone)]
pub enum SkillSource {
    None,
    Scripted,
    Learned(Arc<SacModel>),
}

pub fn registry(policy: &TaskPolicy, source: &SkillSource) -> SkillRegistry {
    let controller: Option<Arc<dyn LearnedController>> = match source {
        SkillSource::None => None,
        SkillSource::Scripted => Some(Arc::new(ScriptedPush)),
        SkillSource::Learned(m) => Some(m.clone()),
    };
    let mut reg = SkillRegistry::new();
    if let Some(c) = controller {
        for id in policy.learned_skills() {
            reg.insert(&id, c.clone());
        }
    }
    reg
}

pub fn task_of(policy: &TaskPolicy) -> Result<TaskName> {
    policy.task_name.parse().map_err(|_| PipelineError::Input(format!("policy task `{}` is unknown", policy.task_name)))
}

pub fn eval(
    task: TaskName,
    policy: &TaskPolicy,
    source: &SkillSource,
    cfg: &Config,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    Ok(evaluate(task, policy, &registry(policy, source), &cfg.exec, &cfg.scenario, trials, seed)?)
}

pub fn rl_train(cfg: &Config, classifier: &ClassifierModel, budget: usize, seed: u64) -> Result<TrainReport> {
    let mut tc = cfg.train;
    tc.budget = budget;
    tc.seed = seed;
    Ok(train_skill(&SkillContext::push(), classifier, &tc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Full,
    ClassifierOnly,
    IkOnly,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Full, Condition::ClassifierOnly, Condition::IkOnly];

    pub fn weights(self, full: RewardWeights) -> RewardWeights {
        match self {
            Condition::Full => full,
            Condition::ClassifierOnly => RewardWeights::CLASSIFIER_ONLY,
            Condition::IkOnly => RewardWeights::IK_ONLY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub condition: Condition,
    pub seed: u64,
    pub best_sr: f64,
    pub best_step: usize,
    pub env_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
    pub mean_full: f64,
    pub mean_classifier_only: f64,
    pub mean_ik_only: f64,
    /// full ≥ classifier-only ≥ IK-only on mean SR, with full > IK-only.
    pub ordering_holds: bool,
}

impl AblationReport {
    pub fn from_runs(runs: Vec<AblationRun>) -> Self {
        let mean = |c: Condition| {
            let v: Vec<f64> = runs.iter().filter(|r| r.condition == c).map(|r| r.best_sr).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let (f, c, i) = (mean(Condition::Full), mean(Condition::ClassifierOnly), mean(Condition::IkOnly));
        AblationReport { runs, mean_full: f, mean_classifier_only: c, mean_ik_only: i, ordering_holds: f >= c && c >= i && f > i }
    }
}

/// Trains every reward condition on every seed of the ablation section.
/// `on_run` sees each finished run, e.g. for progress output.
pub fn ablate(
    cfg: &Config,
    classifier: &ClassifierModel,
    budget: usize,
    mut on_run: impl FnMut(&AblationRun),
) -> Result<AblationReport> {
    let mut runs = Vec::new();
    for &seed in &cfg.ablation.seeds {
        for cond in Condition::ALL {
            let mut tc = cfg.train;
            tc.budget = budget;
            tc.seed = seed;
            tc.stop_at = Some(cfg.ablation.stop_at);
            tc.weights = cond.weights(cfg.train.weights);
            let rep = train_skill(&SkillContext::push(), classifier, &tc)?;
            let run = AblationRun {
                condition: cond,
                seed,
                best_sr: rep.best_sr,
                best_step: rep.best_step,
                env_steps: rep.env_steps,
            };
            on_run(&run);
            runs.push(run);
        }
    }
    Ok(AblationReport::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(condition: Condition, best_sr: f64) -> AblationRun {
        AblationRun { condition, seed: 0, best_sr, best_step: 0, env_steps: 0 }
    }

    #[test]
    fn ablation_means_and_ordering() {
        let r = AblationReport::from_runs(vec![
            run(Condition::Full, 1.0),
            run(Condition::Full, 0.8),
            run(Condition::ClassifierOnly, 0.9),
            run(Condition::IkOnly, 0.1),
        ]);
        assert!((r.mean_full - 0.9).abs() < 1e-12);
        assert!(r.ordering_holds);
        let tie = AblationReport::from_runs(vec![run(Condition::Full, 0.5), run(Condition::IkOnly, 0.5)]);
        assert!(!tie.ordering_holds);
        let swapped = AblationReport::from_runs(vec![
            run(Condition::Full, 0.6),
            run(Condition::ClassifierOnly, 0.7),
            run(Condition::IkOnly, 0.0),
        ]);
        assert!(!swapped.ordering_holds);
    }

    #[test]
    fn registry_covers_learned_ids_only_when_a_source_exists() {
        let cfg = Config::default();
        let tree = build_tree(&cfg).unwrap();
        let trace = demo_gen(TaskName::ObjectTransport, 0, &cfg).unwrap();
        let policy = infer(&trace, &tree, &cfg).unwrap();
        let ids = policy.learned_skills();
        assert!(!ids.is_empty());
        assert_eq!(registry(&policy, &SkillSource::None).ids().count(), 0);
        assert_eq!(registry(&policy, &SkillSource::Scripted).ids().count(), ids.len());
    }
}
