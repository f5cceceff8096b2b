//! Task policy inference: keypoints, segmentation, segment descriptors,
//! decision-tree skill classification and policy assembly.

pub mod corpus;
mod keypoints;
mod policy;
mod segment;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2D, Shape, Vec2};
use crate::perception::PerceptionError;
use crate::sim::{EntityId, GoalSpec};

pub use keypoints::detect_keypoints;
pub use policy::{infer_detailed, infer_policy, InferOptions, Inference};
pub use segment::{describe_segment, rule_label, segment_trace};
pub use tree::{train_tree, DecisionTree, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum InferError {
    #[error("empty feature list")]
    EmptyFeatures,
    #[error("trace has {0} frames, need at least 2")]
    ShortTrace(usize),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("empty training corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointKind {
    ObjectRobot,
    ObjectObject,
    RobotRobot,
    BehaviorTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Onset,
    Offset,
    Appearance,
    Disappearance,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InteractionKeypoint {
    pub frame_index: usize,
    pub kind: KeypointKind,
    pub entities: BTreeSet<EntityId>,
    pub transition: Transition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeTrend {
    Closing,
    Opening,
    Steady,
}

impl RangeTrend {
    pub fn as_f64(self) -> f64 {
        match self {
            RangeTrend::Closing => -1.0,
            RangeTrend::Steady => 0.0,
            RangeTrend::Opening => 1.0,
        }
    }
}

/// Values computed from the segment, never supplied by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub range_trend: RangeTrend,
    pub focus_entity: Option<EntityId>,
    pub focus_is_object: bool,
    /// Contact with any object at the segment's first frame.
    pub phi_start: bool,
    /// Boundary distance to the focus entity at the closing frame.
    pub focus_gap: f64,
    /// Absolute rotation of the reference object over the segment (radians),
    /// zero for circular objects.
    pub object_rotation: f64,
    /// Rotation times the object's bounding radius.
    pub object_arc: f64,
    /// Net displacement of the reference object's center.
    pub object_translation: f64,
}

/// Per-robot summary of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDescriptor {
    pub robot_id: EntityId,
    pub phi: bool,
    pub ro: Vec2,
    pub f_ro: bool,
    pub ao: Vec2,
    pub psi: bool,
    pub omega: bool,
    pub rr: Vec2,
    pub f_rr: bool,
    pub ar: Vec2,
    pub derived: Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub theta: Vec<SegmentDescriptor>,
    /// `None` for the segment opening the demonstration.
    pub boundary_keypoint: Option<InteractionKeypoint>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillClass {
    Approach,
    MoveToContact,
    DetachContact,
    Retreat,
    Idle,
    LearnedSkill(String),
}

impl SkillClass {
    pub fn is_learned(&self) -> bool {
        matches!(self, SkillClass::LearnedSkill(_))
    }
}

impl fmt::Display for SkillClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkillClass::Approach => f.write_str("approach"),
            SkillClass::MoveToContact => f.write_str("move_to_contact"),
            SkillClass::DetachContact => f.write_str("detach_contact"),
            SkillClass::Retreat => f.write_str("retreat"),
            SkillClass::Idle => f.write_str("idle"),
            SkillClass::LearnedSkill(id) => write!(f, "learned_skill({id})"),
        }
    }
}

/// Entity profile that gates the start of execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    /// Entity that appeared in the demonstration.
    pub entity: EntityId,
    pub frame: usize,
    pub shape: Shape,
    pub color: String,
    /// Whether a matching entity must also share the color.
    pub match_color: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub all_of: Vec<GoalSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub start_frame: usize,
    pub end_frame: usize,
    pub skills: BTreeMap<EntityId, SkillClass>,
    pub goal: GoalSet,
    pub theta: Vec<SegmentDescriptor>,
}

impl PolicyEntry {
    pub fn descriptor(&self, robot: EntityId) -> Option<&SegmentDescriptor> {
        self.theta.iter().find(|d| d.robot_id == robot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPolicy {
    pub task_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Trigger>,
    /// Demonstration start pose of every robot role.
    pub roles: BTreeMap<EntityId, Pose2D>,
    pub entries: Vec<PolicyEntry>,
}

impl TaskPolicy {
    pub fn descriptor_count(&self) -> usize {
        self.entries.iter().map(|e| e.theta.len()).sum()
    }

    /// Distinct learned skill ids referenced by the policy.
    pub fn learned_skills(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .flat_map(|e| e.skills.values())
            .filter_map(|s| match s {
                SkillClass::LearnedSkill(id) => Some(id.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }
}
