//! `mrlfd` command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mrlfd::exec::execute_policy;
use mrlfd::learn::train::metrics_csv;
use mrlfd::sim::{make_scenario, TaskName};
use mrlfd::trace::{parse_jsonl, to_jsonl};

use crate::config::Config;
use crate::pipeline::{self, PipelineError, SkillSource};

#[derive(Debug, Parser)]
#[command(name = "mrlfd", version, about = "Multi-robot learning from demonstration")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SkillArgs {
    /// SAC checkpoint used for every learned skill.
    #[arg(long, conflicts_with = "scripted_push")]
    pub skill: Option<PathBuf>,
    /// Use the hand-written pushing controller for learned skills.
    #[arg(long)]
    pub scripted_push: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record a scripted expert demonstration.
    DemoGen {
        #[arg(long)]
        task: TaskName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the skill tree on the synthetic descriptor corpus.
    TreeTrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer a task policy from a demonstration.
    Infer {
        #[arg(long)]
        demo: PathBuf,
        /// Skill tree; fitted from the config when absent.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the goal classifier on scripted transport demonstrations.
    ClassifierTrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the push skill with SAC.
    RlTrain {
        /// Classifier checkpoint; trained from the config when absent.
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV; defaults to `<out>.metrics.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Execute a policy on one seeded scenario.
    Exec {
        #[arg(long)]
        policy: PathBuf,
        /// Scenario task; defaults to the policy's task.
        #[arg(long)]
        task: Option<TaskName>,
        #[command(flatten)]
        skills: SkillArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy over seeded trials.
    Eval {
        #[arg(long)]
        task: TaskName,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[command(flatten)]
        skills: SkillArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reward ablation: full, classifier-only and IK-only weights.
    Ablate {
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP + WebSocket service.
    Serve {
        /// Listen address; overrides the config.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn category(e: &PipelineError) -> &'static str {
    match e {
        PipelineError::Io { .. } => "io",
        PipelineError::Input(_) | PipelineError::Trace(_) => "input",
        PipelineError::Sim(_) => "simulation",
        PipelineError::Infer(_) => "inference",
        PipelineError::Exec(_) => "execution",
        PipelineError::Learn(_) => "learning",
    }
}

fn skill_source(a: &SkillArgs) -> Result<SkillSource, PipelineError> {
    if let Some(p) = &a.skill {
        return Ok(SkillSource::Learned(Arc::new(pipeline::parse_skill(&pipeline::read(p)?)?)));
    }
    Ok(if a.scripted_push { SkillSource::Scripted } else { SkillSource::None })
}

fn classifier(path: Option<&Path>, cfg: &Config, seed: u64) -> Result<mrlfd::learn::ClassifierModel, PipelineError> {
    match path {
        Some(p) => pipeline::parse_classifier(&pipeline::read(p)?),
        None => pipeline::classifier(cfg, seed),
    }
}

fn json_file(path: &Path, v: &impl serde::Serialize) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| PipelineError::Input(e.to_string()))?;
    pipeline::write(path, &(text + "\n"))
}

/// Runs one command; returns the machine-readable summary.
pub fn execute(cli: Cli) -> Result<Value, PipelineError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| PipelineError::Input(e.to_string()))?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    Ok(match cli.command {
        Command::DemoGen { task, out } => {
            let trace = pipeline::demo_gen(task, seed, &cfg)?;
            pipeline::write(&out, &to_jsonl(&trace)?)?;
            json!({"command": "demo-gen", "task": task, "seed": seed, "frames": trace.len(), "out": out})
        }
        Command::TreeTrain { out } => {
            let mut cfg = cfg;
            if let Some(s) = cli.seed {
                cfg.inference.corpus_seed = s;
            }
            let tree = pipeline::build_tree(&cfg)?;
            pipeline::write(&out, &tree.to_json())?;
            json!({"command": "tree-train", "depth": tree.depth(), "out": out})
        }
        Command::Infer { demo, tree, out } => {
            let trace = parse_jsonl(&pipeline::read(&demo)?)?;
            let tree = match tree {
                Some(p) => pipeline::parse_tree(&pipeline::read(&p)?)?,
                None => pipeline::build_tree(&cfg)?,
            };
            let policy = pipeline::infer(&trace, &tree, &cfg)?;
            pipeline::write(&out, &(policy.to_json() + "\n"))?;
            json!({
                "command": "infer",
                "task": policy.task_name,
                "entries": policy.entries.len(),
                "descriptors": policy.descriptor_count(),
                "learned_skills": policy.learned_skills(),
                "out": out,
            })
        }
        Command::ClassifierTrain { out } => {
            let m = pipeline::classifier(&cfg, seed)?;
            pipeline::write(&out, &m.to_checkpoint().to_json())?;
            json!({"command": "classifier-train", "report": m.report, "out": out})
        }
        Command::RlTrain { classifier: cpath, budget, out, metrics } => {
            let clf = classifier(cpath.as_deref(), &cfg, seed)?;
            let rep = pipeline::rl_train(&cfg, &clf, budget.unwrap_or(cfg.train.budget), seed)?;
            pipeline::write(&out, &rep.model.to_checkpoint().to_json())?;
            let mpath = metrics.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".metrics.csv");
                p.into()
            });
            pipeline::write(&mpath, &metrics_csv(&rep.metrics))?;
            json!({
                "command": "rl-train",
                "best_sr": rep.best_sr,
                "best_step": rep.best_step,
                "env_steps": rep.env_steps,
                "converged": rep.converged,
                "out": out,
                "metrics": mpath,
            })
        }
        Command::Exec { policy, task, skills, out } => {
            let policy = pipeline::parse_policy(&pipeline::read(&policy)?)?;
            let task = match task {
                Some(t) => t,
                None => pipeline::task_of(&policy)?,
            };
            let scenario = make_scenario(task, seed, &cfg.scenario)?;
            let reg = pipeline::registry(&policy, &skill_source(&skills)?);
            let (world, outcome) = execute_policy(&scenario, &policy, &reg, &cfg.exec, None)?;
            json_file(&out, &json!({"outcome": outcome, "final_world": world}))?;
            json!({"command": "exec", "task": task, "seed": seed, "success": outcome.success, "out": out})
        }
        Command::Eval { task, policy, trials, skills, out } => {
            let policy = pipeline::parse_policy(&pipeline::read(&policy)?)?;
            let report = pipeline::eval(task, &policy, &skill_source(&skills)?, &cfg, trials, seed)?;
            pipeline::write(&out, &(report.to_json() + "\n"))?;
            json!({"command": "eval", "task": task, "trials": trials, "success_rate": report.success_rate, "out": out})
        }
        Command::Ablate { classifier: cpath, budget, out } => {
            let clf = classifier(cpath.as_deref(), &cfg, seed)?;
            let rep = pipeline::ablate(&cfg, &clf, budget.unwrap_or(cfg.ablation.budget), |r| {
                eprintln!("{:?} seed {}: best SR {:.3} at step {}", r.condition, r.seed, r.best_sr, r.best_step);
            })?;
            json_file(&out, &rep)?;
            json!({
                "command": "ablate",
                "mean_full": rep.mean_full,
                "mean_classifier_only": rep.mean_classifier_only,
                "mean_ik_only": rep.mean_ik_only,
                "ordering_holds": rep.ordering_holds,
                "out": out,
            })
        }
        Command::Serve { bind } => {
            let mut cfg = cfg;
            if let Some(b) = bind {
                cfg.server.bind = b;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Io { path: "runtime".into(), source: e })?;
            rt.block_on(crate::server::serve(cfg))
                .map_err(|e| PipelineError::Io { path: "listener".into(), source: e })?;
            json!({"command": "serve"})
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on pipeline failure, 2 on usage errors.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{}", json!({"ok": true, "summary": summary}));
            0
        }
        Err(e) => {
            eprintln!("{}", json!({"ok": false, "category": category(&e), "error": e.to_string()}));
            1
        }
    }
}
