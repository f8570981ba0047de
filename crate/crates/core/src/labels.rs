//! Task label spaces.
//!
//! Every task here is binary except the joint head, whose four classes are
//! the product of the bias and stereotype labels. Class indices are frozen:
//! checkpoints and prediction dumps store them directly, so any change to
//! the enumeration must bump [`JOINT_ENUMERATION_VERSION`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Version tag of the joint-class enumeration written into checkpoints.
pub const JOINT_ENUMERATION_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("cannot parse {raw:?} as a {task} label")]
    Parse { raw: String, task: TaskId },
    #[error("joint label index {0} is outside 0..=3")]
    JointOutOfRange(i64),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown task mode {0:?}")]
    UnknownMode(String),
    #[error("invalid task mode: {0}")]
    InvalidMode(String),
}

/// A binary label. `Negative` is class 0, `Positive` is class 1 for every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub fn index(self) -> usize {
        match self {
            BinaryLabel::Negative => 0,
            BinaryLabel::Positive => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(BinaryLabel::Negative),
            1 => Some(BinaryLabel::Positive),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }
}

impl From<bool> for BinaryLabel {
    fn from(positive: bool) -> Self {
        if positive {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }
}

/// Identifies a classification head / label column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Bias,
    Stereotype,
    Sentiment,
    /// The 4-class bias x stereotype product used by full multi-task training.
    Joint,
}

impl TaskId {
    pub const BINARY: [TaskId; 3] = [TaskId::Bias, TaskId::Stereotype, TaskId::Sentiment];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Bias => "bias",
            TaskId::Stereotype => "stereotype",
            TaskId::Sentiment => "sentiment",
            TaskId::Joint => "joint",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            TaskId::Joint => 4,
            _ => 2,
        }
    }

    /// Canonical (negative, positive) names, also used as default prompt option texts
    /// after replacing underscores with spaces.
    pub fn canonical_names(self) -> Option<(&'static str, &'static str)> {
        match self {
            TaskId::Bias => Some(("no_bias", "bias")),
            TaskId::Stereotype => Some(("no_stereotype", "stereotype")),
            TaskId::Sentiment => Some(("negative", "positive")),
            TaskId::Joint => None,
        }
    }

    /// Human-readable class names in class-index order.
    pub fn class_names(self) -> Vec<String> {
        match self.canonical_names() {
            Some((neg, pos)) => vec![neg.replace('_', " "), pos.replace('_', " ")],
            None => JointLabel::ALL
                .iter()
                .map(|j| {
                    let (b, s) = j.decompose();
                    format!(
                        "{}+{}",
                        TaskId::Bias.label_name(b),
                        TaskId::Stereotype.label_name(s)
                    )
                })
                .collect(),
        }
    }

    pub fn label_name(self, label: BinaryLabel) -> &'static str {
        let (neg, pos) = self.canonical_names().unwrap_or(("0", "1"));
        match label {
            BinaryLabel::Negative => neg,
            BinaryLabel::Positive => pos,
        }
    }

    fn aliases(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            TaskId::Bias => (
                &["no_bias", "no bias", "nobias", "unbiased", "nb", "0", "no", "false"],
                &["bias", "biased", "b", "1", "yes", "true"],
            ),
            TaskId::Stereotype => (
                &[
                    "no_stereotype",
                    "no stereotype",
                    "non-stereotype",
                    "non_stereotype",
                    "nonstereotype",
                    "ns",
                    "0",
                    "no",
                    "false",
                ],
                &["stereotype", "stereotypical", "s", "1", "yes", "true"],
            ),
            TaskId::Sentiment => (
                &["negative", "neg", "0", "no", "false"],
                &["positive", "pos", "1", "yes", "true"],
            ),
            TaskId::Joint => (&[], &[]),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bias" => Ok(TaskId::Bias),
            "stereotype" => Ok(TaskId::Stereotype),
            "sentiment" => Ok(TaskId::Sentiment),
            "joint" => Ok(TaskId::Joint),
            other => Err(LabelError::UnknownTask(other.to_string())),
        }
    }
}

/// Case-insensitive label parsing against the task's alias table.
pub fn parse_label(raw: &str, task: TaskId) -> Result<BinaryLabel, LabelError> {
    let norm = raw.trim().to_lowercase();
    let (neg, pos) = task.aliases();
    if pos.contains(&norm.as_str()) {
        Ok(BinaryLabel::Positive)
    } else if neg.contains(&norm.as_str()) {
        Ok(BinaryLabel::Negative)
    } else {
        Err(LabelError::Parse {
            raw: raw.to_string(),
            task,
        })
    }
}

/// One of the four (bias, stereotype) combinations.
///
/// | index | bias | stereotype |
/// |-------|------|------------|
/// | 0 | no | no |
/// | 1 | yes | no |
/// | 2 | no | yes |
/// | 3 | yes | yes |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct JointLabel(u8);

impl JointLabel {
    pub const ALL: [JointLabel; 4] = [JointLabel(0), JointLabel(1), JointLabel(2), JointLabel(3)];

    pub fn new(index: i64) -> Result<Self, LabelError> {
        if (0..4).contains(&index) {
            Ok(JointLabel(index as u8))
        } else {
            Err(LabelError::JointOutOfRange(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn decompose(self) -> (BinaryLabel, BinaryLabel) {
        from_joint(self)
    }
}

impl TryFrom<i64> for JointLabel {
    type Error = LabelError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        JointLabel::new(v)
    }
}

impl From<JointLabel> for i64 {
    fn from(j: JointLabel) -> i64 {
        j.0 as i64
    }
}

pub fn to_joint(bias: BinaryLabel, stereotype: BinaryLabel) -> JointLabel {
    JointLabel((bias.index() + 2 * stereotype.index()) as u8)
}

pub fn from_joint(joint: JointLabel) -> (BinaryLabel, BinaryLabel) {
    let i = joint.index();
    (
        BinaryLabel::from(i & 1 == 1),
        BinaryLabel::from(i & 2 == 2),
    )
}

/// Checked inverse for raw indices read from files.
pub fn from_joint_index(index: i64) -> Result<(BinaryLabel, BinaryLabel), LabelError> {
    JointLabel::new(index).map(from_joint)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    StlBias,
    StlStereotype,
    StlAuxiliary,
    SharedMtl,
    FullMtl,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::StlBias => "stl_bias",
            ModeKind::StlStereotype => "stl_stereotype",
            ModeKind::StlAuxiliary => "stl_auxiliary",
            ModeKind::SharedMtl => "shared_mtl",
            ModeKind::FullMtl => "full_mtl",
        }
    }
}

impl FromStr for ModeKind {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stl_bias" => Ok(ModeKind::StlBias),
            "stl_stereotype" => Ok(ModeKind::StlStereotype),
            "stl_auxiliary" => Ok(ModeKind::StlAuxiliary),
            "shared_mtl" => Ok(ModeKind::SharedMtl),
            "full_mtl" => Ok(ModeKind::FullMtl),
            other => Err(LabelError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxiliaryTask {
    Stereotype,
    Sentiment,
}

impl AuxiliaryTask {
    pub fn task(self) -> TaskId {
        match self {
            AuxiliaryTask::Stereotype => TaskId::Stereotype,
            AuxiliaryTask::Sentiment => TaskId::Sentiment,
        }
    }
}

impl FromStr for AuxiliaryTask {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stereotype" => Ok(AuxiliaryTask::Stereotype),
            "sentiment" => Ok(AuxiliaryTask::Sentiment),
            other => Err(LabelError::UnknownTask(other.to_string())),
        }
    }
}

/// Training formulation plus its auxiliary pairing. Construct through
/// [`TaskMode::new`] so the pairing rules always hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTaskMode", into = "RawTaskMode")]
pub struct TaskMode {
    mode: ModeKind,
    auxiliary: Option<AuxiliaryTask>,
}

#[derive(Serialize, Deserialize)]
struct RawTaskMode {
    mode: ModeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    auxiliary_task: Option<AuxiliaryTask>,
}

impl TryFrom<RawTaskMode> for TaskMode {
    type Error = LabelError;
    fn try_from(raw: RawTaskMode) -> Result<Self, Self::Error> {
        TaskMode::new(raw.mode, raw.auxiliary_task)
    }
}

impl From<TaskMode> for RawTaskMode {
    fn from(m: TaskMode) -> Self {
        RawTaskMode {
            mode: m.mode,
            auxiliary_task: m.auxiliary,
        }
    }
}

impl TaskMode {
    pub fn new(mode: ModeKind, auxiliary: Option<AuxiliaryTask>) -> Result<Self, LabelError> {
        let needs_aux = matches!(mode, ModeKind::StlAuxiliary | ModeKind::SharedMtl);
        match (needs_aux, auxiliary) {
            (true, None) => Err(LabelError::InvalidMode(format!(
                "{mode} requires an auxiliary task"
            ))),
            (false, Some(aux)) => Err(LabelError::InvalidMode(format!(
                "{mode} does not take an auxiliary task (got {:?})",
                aux
            ))),
            _ => Ok(TaskMode { mode, auxiliary }),
        }
    }

    pub fn stl_bias() -> Self {
        TaskMode {
            mode: ModeKind::StlBias,
            auxiliary: None,
        }
    }

    pub fn stl_stereotype() -> Self {
        TaskMode {
            mode: ModeKind::StlStereotype,
            auxiliary: None,
        }
    }

    pub fn shared_mtl(aux: AuxiliaryTask) -> Self {
        TaskMode {
            mode: ModeKind::SharedMtl,
            auxiliary: Some(aux),
        }
    }

    pub fn full_mtl() -> Self {
        TaskMode {
            mode: ModeKind::FullMtl,
            auxiliary: None,
        }
    }

    pub fn kind(&self) -> ModeKind {
        self.mode
    }

    pub fn auxiliary(&self) -> Option<AuxiliaryTask> {
        self.auxiliary
    }

    /// Heads trained in this mode, in a fixed order.
    pub fn head_tasks(&self) -> Vec<TaskId> {
        match self.mode {
            ModeKind::StlBias => vec![TaskId::Bias],
            ModeKind::StlStereotype => vec![TaskId::Stereotype],
            ModeKind::StlAuxiliary => vec![self.auxiliary.expect("validated").task()],
            ModeKind::SharedMtl => vec![TaskId::Bias, self.auxiliary.expect("validated").task()],
            ModeKind::FullMtl => vec![TaskId::Joint],
        }
    }

    /// Tasks reported after decomposition (the joint head reports bias and stereotype).
    pub fn reported_tasks(&self) -> Vec<TaskId> {
        match self.mode {
            ModeKind::FullMtl => vec![TaskId::Bias, TaskId::Stereotype],
            _ => self.head_tasks(),
        }
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.auxiliary {
            Some(aux) => write!(f, "{}({})", self.mode, aux.task()),
            None => write!(f, "{}", self.mode),
        }
    }
}
