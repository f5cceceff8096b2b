//! Binary goal classifier trained on demonstration frames.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::sim::{make_scenario, Arena, EntityId, EntitySelector, ScenarioParams, SimError, TaskName};
use crate::trace::{script_demo, DemoTrace};

use super::checkpoint::Checkpoint;
use super::nn::{sigmoid, Activation, Adam, Mlp};
use super::state::{frame_state, state_dim, StateVector};
use super::LearnError;

#[derive(Debug, Clone, PartialEq)]
pub struct GoalExample {
    pub features: StateVector,
    /// 1 for goal states, 0 otherwise.
    pub label: u8,
}

/// A demonstration together with the entities and goal its states describe.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDemo {
    pub trace: DemoTrace,
    pub arena: Arena,
    pub robots: Vec<EntityId>,
    pub object: EntityId,
    pub goal: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    pub k_pos: usize,
    /// Minimum distance in frames between a sampled negative and the end.
    pub g_gap: usize,
    pub negatives_per_demo: usize,
    /// Goal-shifted negatives per demo.
    pub shifted_per_demo: usize,
    /// Goal-shift distance range for perturbed negatives, meters.
    pub shift_min: f64,
    pub shift_max: f64,
    /// Use per-frame goal labels when a demo carries them.
    pub use_annotations: bool,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            k_pos: 5,
            g_gap: 15,
            negatives_per_demo: 5,
            shifted_per_demo: 20,
            shift_min: 0.1,
            shift_max: 0.6,
            use_annotations: true,
            seed: 0,
        }
    }
}

/// Scripted single-robot transport demonstrations with their goals.
pub fn transport_goal_demos(count: usize, first_seed: u64) -> Result<Vec<GoalDemo>, SimError> {
    let params = ScenarioParams::default();
    (0..count as u64)
        .map(|i| {
            let seed = first_seed + i;
            let sc = make_scenario(TaskName::ObjectTransport, seed, &params)?;
            let trace = script_demo(TaskName::ObjectTransport, seed, &params)?;
            let g = &sc.world.goals[0];
            let object = match g.subject {
                EntitySelector::Id(id) => id,
                _ => unreachable!("transport goals select by id"),
            };
            Ok(GoalDemo { trace, arena: sc.world.arena, robots: sc.world.robot_ids(), object, goal: g.target.position() })
        })
        .collect()
}

fn example(d: &GoalDemo, frame: usize, goal: Vec2, label: u8) -> Option<GoalExample> {
    let s = frame_state(&d.trace.frames[frame], d.arena, &d.robots, d.object, goal)?;
    Some(GoalExample { features: s, label })
}

/// Positives are the last `k_pos` frames (or the annotated goal frames);
/// negatives are earlier frames at least `g_gap` before the end plus goal
/// states re-expressed against a shifted goal.
pub fn build_goal_dataset(demos: &[GoalDemo], p: &DatasetParams) -> Result<Vec<GoalExample>, LearnError> {
    if demos.is_empty() {
        return Err(LearnError::NoDemos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut out = Vec::new();
    for (i, d) in demos.iter().enumerate() {
        let n = d.trace.frames.len();
        let need = p.k_pos + p.g_gap;
        if n < need {
            return Err(LearnError::ShortDemo(i, n, need));
        }
        let annotated = p.use_annotations && d.trace.has_annotations();
        let positives: Vec<usize> = if annotated {
            (0..n).filter(|&t| d.trace.frames[t].label == Some(true)).collect()
        } else {
            (n - p.k_pos..n).collect()
        };
        out.extend(positives.iter().filter_map(|&t| example(d, t, d.goal, 1)));
        let mut early: Vec<usize> = (0..n - p.g_gap)
            .filter(|&t| !annotated || d.trace.frames[t].label != Some(true))
            .collect();
        early.shuffle(&mut rng);
        out.extend(early.iter().take(p.negatives_per_demo).filter_map(|&t| example(d, t, d.goal, 0)));
        if positives.is_empty() {
            continue;
        }
        for _ in 0..p.shifted_per_demo {
            let t = positives[rng.random_range(0..positives.len())];
            let dir = Vec2::from_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            let shifted = d.goal + dir * rng.random_range(p.shift_min..p.shift_max);
            out.extend(example(d, t, shifted, 0));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    /// Held-out fraction.
    pub split: f64,
    pub seed: u64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self { hidden: 16, epochs: 1500, lr: 0.01, l2: 1e-3, split: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub train_size: usize,
    pub heldout_size: usize,
}

/// One-hidden-layer tanh network with a sigmoid output over the state
/// vector's displacement entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub net: Mlp,
    pub robots: usize,
    pub report: ClassifierReport,
}

fn matrix(rows: &[&GoalExample], robots: usize) -> Array2<f64> {
    let d = state_dim(robots);
    let mut x = Array2::zeros((rows.len(), d));
    for (i, e) in rows.iter().enumerate() {
        for (j, v) in e.features.relative_only(robots).0.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    x
}

impl ClassifierModel {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Goal probability in [0, 1].
    pub fn predict(&self, s: &StateVector) -> Result<f64, LearnError> {
        if s.len() != self.input_dim() {
            return Err(LearnError::Dimension { expected: self.input_dim(), got: s.len() });
        }
        let x = Array2::from_shape_vec((1, s.len()), s.relative_only(self.robots).0).expect("row shape");
        Ok(sigmoid(self.net.forward(x.view())[[0, 0]]))
    }

    pub fn accuracy(&self, data: &[GoalExample]) -> Result<f64, LearnError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for e in data {
            let p = self.predict(&e.features)?;
            if (p >= 0.5) == (e.label == 1) {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new("classifier");
        c.meta.insert("robots".into(), self.robots.into());
        c.meta.insert("activation".into(), "tanh".into());
        c.meta.insert("report".into(), serde_json::to_value(self.report).expect("report serializes"));
        c.put_mlp("net", &self.net);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, LearnError> {
        c.expect_kind("classifier")?;
        let robots = c.meta.get("robots").and_then(|v| v.as_u64()).unwrap_or(1) as usize;
        let report = c
            .meta
            .get("report")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or(ClassifierReport { train_accuracy: 0.0, heldout_accuracy: 0.0, train_size: 0, heldout_size: 0 });
        let net = c.mlp("net", Activation::Tanh)?;
        if net.input_dim() != state_dim(robots) || net.output_dim() != 1 {
            return Err(LearnError::Checkpoint("classifier shape does not match its robot count".into()));
        }
        Ok(Self { net, robots, report })
    }
}

/// Full-batch Adam on binary cross-entropy with L2 on the weights.
pub fn train_classifier(data: &[GoalExample], p: &ClassifierParams) -> Result<ClassifierModel, LearnError> {
    let pos = data.iter().filter(|e| e.label == 1).count();
    if pos == 0 || pos == data.len() {
        return Err(LearnError::SingleClass);
    }
    let dim = data[0].features.len();
    if let Some(e) = data.iter().find(|e| e.features.len() != dim) {
        return Err(LearnError::Dimension { expected: dim, got: e.features.len() });
    }
    if dim < super::state::OBJECT_BLOCK || (dim - super::state::OBJECT_BLOCK) % super::state::ROBOT_BLOCK != 0 {
        return Err(LearnError::Dimension { expected: state_dim(1), got: dim });
    }
    let robots = (dim - super::state::OBJECT_BLOCK) / super::state::ROBOT_BLOCK;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng);
    let held = ((data.len() as f64) * p.split.clamp(0.0, 0.9)).round() as usize;
    let (test_idx, train_idx) = idx.split_at(held);
    let train: Vec<&GoalExample> = train_idx.iter().map(|&i| &data[i]).collect();
    let test: Vec<GoalExample> = test_idx.iter().map(|&i| data[i].clone()).collect();
    let x = matrix(&train, robots);
    let y: Vec<f64> = train.iter().map(|e| e.label as f64).collect();
    let mut net = Mlp::new(&[dim, p.hidden, 1], Activation::Tanh, &mut rng);
    let mut opt = Adam::new(&net, p.lr);
    let n = train.len() as f64;
    for _ in 0..p.epochs {
        let (z, cache) = net.forward_cached(x.view());
        let mut dz = z.clone();
        for (i, g) in dz.index_axis_mut(Axis(1), 0).iter_mut().enumerate() {
            *g = (sigmoid(z[[i, 0]]) - y[i]) / n;
        }
        let (mut grads, _) = net.backward(&cache, dz);
        for (g, l) in grads.iter_mut().zip(&net.layers) {
            g.w.scaled_add(p.l2, &l.w);
        }
        opt.step(&mut net, &grads);
    }
    let blank = ClassifierReport { train_accuracy: 0.0, heldout_accuracy: 0.0, train_size: train.len(), heldout_size: test.len() };
    let mut model = ClassifierModel { net, robots, report: blank };
    let owned: Vec<GoalExample> = train.into_iter().cloned().collect();
    model.report.train_accuracy = model.accuracy(&owned)?;
    model.report.heldout_accuracy = if test.is_empty() { model.report.train_accuracy } else { model.accuracy(&test)? };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::state::state_dim;

    fn toy(seed: u64, n: usize) -> Vec<GoalExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let r = if positive { rng.random_range(0.0..0.05) } else { rng.random_range(0.2..0.6) };
                let a = rng.random_range(-3.0..3.0f64);
                let mut v: Vec<f64> = (0..state_dim(1)).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = r / (r + 0.1);
                v[8] = q * a.cos();
                v[9] = q * a.sin();
                GoalExample { features: StateVector(v), label: positive as u8 }
            })
            .collect()
    }

    #[test]
    fn separable_toy_fits() {
        let data = toy(1, 400);
        let m = train_classifier(&data, &ClassifierParams { split: 0.0, epochs: 1500, ..Default::default() }).unwrap();
        assert_eq!(m.report.train_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy(2, 100);
        let p = ClassifierParams { epochs: 50, ..Default::default() };
        assert_eq!(train_classifier(&data, &p).unwrap(), train_classifier(&data, &p).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<GoalExample> = toy(3, 10).into_iter().filter(|e| e.label == 1).collect();
        assert_eq!(train_classifier(&data, &ClassifierParams::default()), Err(LearnError::SingleClass));
    }

    #[test]
    fn dataset_counts_without_annotations() {
        let mut demos = transport_goal_demos(3, 0).unwrap();
        for d in &mut demos {
            for f in &mut d.trace.frames {
                f.label = None;
            }
        }
        let data = build_goal_dataset(&demos, &DatasetParams::default()).unwrap();
        assert_eq!(data.iter().filter(|e| e.label == 1).count(), 15);
        assert!(data.iter().filter(|e| e.label == 0).count() >= 15);
    }

    #[test]
    fn annotations_override_positives() {
        let mut demos = transport_goal_demos(1, 0).unwrap();
        let n = demos[0].trace.frames.len();
        for (t, f) in demos[0].trace.frames.iter_mut().enumerate() {
            f.label = Some(t + 10 >= n && t < n - 2);
        }
        let data = build_goal_dataset(&demos, &DatasetParams::default()).unwrap();
        let pos: Vec<_> = data.iter().filter(|e| e.label == 1).collect();
        assert_eq!(pos.len(), 8);
    }

    #[test]
    fn empty_and_short_demos_rejected() {
        assert_eq!(build_goal_dataset(&[], &DatasetParams::default()), Err(LearnError::NoDemos));
        let mut demos = transport_goal_demos(1, 0).unwrap();
        demos[0].trace.frames.truncate(10);
        assert!(matches!(build_goal_dataset(&demos, &DatasetParams::default()), Err(LearnError::ShortDemo(0, 10, 20))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = train_classifier(&toy(4, 60), &ClassifierParams { epochs: 20, ..Default::default() }).unwrap();
        let c = Checkpoint::from_json(&m.to_checkpoint().to_json()).unwrap();
        assert_eq!(ClassifierModel::from_checkpoint(&c).unwrap(), m);
    }
}
