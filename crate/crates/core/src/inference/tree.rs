//! CART decision tree (Gini impurity) over segment descriptors.

use serde::{Deserialize, Serialize};

use super::segment::learned_id;
use super::{InferError, SegmentDescriptor, SkillClass};

pub const FEATURE_NAMES: [&str; 18] = [
    "phi", "ro_norm", "f_ro", "psi", "omega", "rr_norm", "f_rr", "range_trend", "phi_start", "focus_kind", "ro_x",
    "ro_y", "ao_x", "ao_y", "rr_x", "rr_y", "ar_x", "ar_y",
];

pub fn feature_vector(d: &SegmentDescriptor) -> Vec<f64> {
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    let focus_kind = match d.derived.focus_entity {
        None => 0.0,
        Some(_) if d.derived.focus_is_object => 1.0,
        Some(_) => 2.0,
    };
    vec![
        b(d.phi),
        d.ro.norm(),
        b(d.f_ro),
        b(d.psi),
        b(d.omega),
        d.rr.norm(),
        b(d.f_rr),
        d.derived.range_trend.as_f64(),
        b(d.derived.phi_start),
        focus_kind,
        d.ro.x,
        d.ro.y,
        d.ao.x,
        d.ao.y,
        d.rr.x,
        d.rr.y,
        d.ar.x,
        d.ar.y,
    ]
}

/// Class name the tree predicts; learned skills share one class.
pub fn family(c: &SkillClass) -> &'static str {
    match c {
        SkillClass::Approach => "approach",
        SkillClass::MoveToContact => "move_to_contact",
        SkillClass::DetachContact => "detach_contact",
        SkillClass::Retreat => "retreat",
        SkillClass::Idle => "idle",
        SkillClass::LearnedSkill(_) => "learned_skill",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { class: usize, samples: usize },
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 10, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub features: Vec<String>,
    pub classes: Vec<String>,
    pub root: TreeNode,
    pub training_accuracy: f64,
    pub training_samples: usize,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn build(x: &[Vec<f64>], y: &[usize], idx: &[usize], k: usize, depth: usize, p: &TreeParams) -> TreeNode {
    let mut counts = vec![0; k];
    for &i in idx {
        counts[y[i]] += 1;
    }
    let leaf = TreeNode::Leaf { class: majority(&counts), samples: idx.len() };
    let parent = gini(&counts, idx.len());
    if depth >= p.max_depth || idx.len() < p.min_samples_split || parent == 0.0 {
        return leaf;
    }
    let nf = x[idx[0]].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..nf {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = vec![0usize; k];
        let mut right = counts.clone();
        for s in 0..order.len() - 1 {
            let cls = y[order[s]];
            left[cls] += 1;
            right[cls] -= 1;
            let (va, vb) = (x[order[s]][f], x[order[s + 1]][f]);
            if va == vb {
                continue;
            }
            let nl = s + 1;
            let nr = order.len() - nl;
            let w = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / order.len() as f64;
            let gain = parent - w;
            let thr = 0.5 * (va + vb);
            if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                best = Some((gain, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else { return leaf };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(build(x, y, &l, k, depth + 1, p)),
        right: Box::new(build(x, y, &r, k, depth + 1, p)),
    }
}

impl DecisionTree {
    /// Fits a tree on raw feature vectors with string class labels.
    /// Split ties go to the lowest feature index, then the lowest threshold.
    pub fn fit(x: &[Vec<f64>], labels: &[String], features: Vec<String>, params: &TreeParams) -> Result<Self, InferError> {
        if x.is_empty() || x.len() != labels.len() {
            return Err(InferError::EmptyCorpus);
        }
        let mut classes: Vec<String> = labels.to_vec();
        classes.sort();
        classes.dedup();
        let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("class listed")).collect();
        let idx: Vec<usize> = (0..x.len()).collect();
        let root = build(x, &y, &idx, classes.len(), 0, params);
        let mut tree = DecisionTree { features, classes, root, training_accuracy: 0.0, training_samples: x.len() };
        let hits = x.iter().zip(labels).filter(|(v, l)| tree.predict_vector(v) == l.as_str()).count();
        tree.training_accuracy = hits as f64 / x.len() as f64;
        Ok(tree)
    }

    pub fn predict_vector(&self, v: &[f64]) -> &str {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return &self.classes[*class],
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if v[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Skill class for a descriptor; learned skills are named by the
    /// reference object's rotation.
    pub fn classify(&self, d: &SegmentDescriptor) -> SkillClass {
        match self.predict_vector(&feature_vector(d)) {
            "approach" => SkillClass::Approach,
            "move_to_contact" => SkillClass::MoveToContact,
            "detach_contact" => SkillClass::DetachContact,
            "retreat" => SkillClass::Retreat,
            "learned_skill" => SkillClass::LearnedSkill(learned_id(d).to_string()),
            _ => SkillClass::Idle,
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn accuracy(&self, samples: &[(SegmentDescriptor, SkillClass)]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let hits = samples.iter().filter(|(d, c)| family(&self.classify(d)) == family(c)).count();
        hits as f64 / samples.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn train_tree(samples: &[(SegmentDescriptor, SkillClass)], params: &TreeParams) -> Result<DecisionTree, InferError> {
    let x: Vec<Vec<f64>> = samples.iter().map(|(d, _)| feature_vector(d)).collect();
    let y: Vec<String> = samples.iter().map(|(_, c)| family(c).to_string()).collect();
    DecisionTree::fit(&x, &y, FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn separable_is_fit_exactly() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<String> = (0..40).map(|i| if i < 17 { "a" } else { "b" }.to_string()).collect();
        let t = DecisionTree::fit(&x, &y, names(2), &TreeParams::default()).unwrap();
        assert_eq!(t.training_accuracy, 1.0);
        assert_eq!(t.depth(), 1);
        match &t.root {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 16.5);
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let y = vec!["a".to_string(), "b".to_string()];
        let t = DecisionTree::fit(&x, &y, names(2), &TreeParams::default()).unwrap();
        assert!(matches!(t.root, TreeNode::Split { feature: 0, .. }));
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<String> = (0..64).map(|i| format!("{}", i % 2)).collect();
        let t = DecisionTree::fit(&x, &y, names(1), &TreeParams { max_depth: 3, min_samples_split: 2 }).unwrap();
        assert!(t.depth() <= 3);
        assert!(t.training_accuracy < 1.0);
    }

    #[test]
    fn json_round_trip() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec!["a".to_string(), "a".to_string(), "b".to_string()];
        let t = DecisionTree::fit(&x, &y, names(1), &TreeParams::default()).unwrap();
        assert_eq!(DecisionTree::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert_eq!(DecisionTree::fit(&[], &[], names(1), &TreeParams::default()), Err(InferError::EmptyCorpus));
    }
}
