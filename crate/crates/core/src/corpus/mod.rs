//! Corpus assembly: source ingestion, label aggregation, agreement and splits.

mod agreement;
mod assemble;
pub mod io;
mod split;
mod stats;
mod synthetic;

pub use agreement::{
    aggregate_annotations, count_matrix, fleiss_kappa, majority_vote, AgreementReport,
    AggregatedLabels, AnnotationRecord, TieCase,
};
pub use assemble::{
    assemble_intersentence, assemble_intrasentence, extract_crows_pairs, extract_stereoset,
    labeled_rows, StereoSetDocument, StereoSetItem, StereoSetOption, DEFAULT_BLANK_MARKER,
};
pub use split::{split, split_sizes, DatasetSplit, SplitManifest, DEFAULT_RATIOS};
pub use stats::{dataset_stats, DistributionReport};
pub use synthetic::separable_corpus;

use crate::labels::{BinaryLabel, TaskId};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed template {template:?}: expected exactly one {marker:?} marker, found {found}")]
    MalformedTemplate {
        template: String,
        marker: String,
        found: usize,
    },
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("schema error in row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("empty vote list")]
    NoVotes,
    #[error("tied vote ({positive} positive vs {negative} negative)")]
    Tie { positive: usize, negative: usize },
    #[error("count matrix shape error: {0}")]
    Shape(String),
    #[error("split size error: {0}")]
    Size(String),
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("record {id} is missing its {task} label")]
    MissingLabel { id: String, task: TaskId },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("annotation error: {0}")]
    Annotation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Religion,
    Gender,
    SocioEconomic,
    Race,
    Profession,
    Other,
    None,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Religion,
        Category::Gender,
        Category::SocioEconomic,
        Category::Race,
        Category::Profession,
        Category::Other,
        Category::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Religion => "religion",
            Category::Gender => "gender",
            Category::SocioEconomic => "socio_economic",
            Category::Race => "race",
            Category::Profession => "profession",
            Category::Other => "other",
            Category::None => "none",
        }
    }

    /// Lowercase snake_case normalization. Known upstream tags that have no
    /// dedicated category fold into `Other` silently; anything unrecognised
    /// folds into `Other` with a warning.
    pub fn normalize(raw: &str) -> Category {
        let norm: String = raw
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        match norm.as_str() {
            "religion" => Category::Religion,
            "gender" | "sex" => Category::Gender,
            "socio_economic" | "socioeconomic" | "socio_economical" | "socio_economic_status" => {
                Category::SocioEconomic
            }
            "race" | "race_color" | "ethnicity" => Category::Race,
            "profession" => Category::Profession,
            "other" | "others" => Category::Other,
            "" | "none" | "n/a" | "na" => Category::None,
            "age" | "disability" | "nationality" | "sexual_orientation" | "physical_appearance" => {
                Category::Other
            }
            _ => {
                log::warn!("unknown category {raw:?}, mapping to other");
                Category::Other
            }
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    CrowsPairs,
    StereosetIntra,
    StereosetInter,
    Toxicbias,
    Babe,
    Sst2,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::CrowsPairs => "crows_pairs",
            Source::StereosetIntra => "stereoset_intra",
            Source::StereosetInter => "stereoset_inter",
            Source::Toxicbias => "toxicbias",
            Source::Babe => "babe",
            Source::Sst2 => "sst2",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "crows_pairs" => Ok(Source::CrowsPairs),
            "stereoset_intra" => Ok(Source::StereosetIntra),
            "stereoset_inter" => Ok(Source::StereosetInter),
            "toxicbias" => Ok(Source::Toxicbias),
            "babe" => Ok(Source::Babe),
            "sst2" => Ok(Source::Sst2),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(CorpusError::MalformedInput(format!("unknown source {other:?}"))),
        }
    }
}

/// One sentence with its (possibly not yet annotated) labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub bias: Option<BinaryLabel>,
    pub stereotype: Option<BinaryLabel>,
    /// Only populated for sentiment-style auxiliary corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<BinaryLabel>,
    pub category: Category,
    pub source: Source,
}

impl SentenceRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        SentenceRecord {
            id: id.into(),
            text: text.into(),
            bias: None,
            stereotype: None,
            sentiment: None,
            category: Category::None,
            source,
        }
    }

    pub fn with_labels(mut self, bias: BinaryLabel, stereotype: BinaryLabel) -> Self {
        self.bias = Some(bias);
        self.stereotype = Some(stereotype);
        self
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn label(&self, task: TaskId) -> Option<BinaryLabel> {
        match task {
            TaskId::Bias => self.bias,
            TaskId::Stereotype => self.stereotype,
            TaskId::Sentiment => self.sentiment,
            TaskId::Joint => None,
        }
    }

    pub fn set_label(&mut self, task: TaskId, label: Option<BinaryLabel>) {
        match task {
            TaskId::Bias => self.bias = label,
            TaskId::Stereotype => self.stereotype = label,
            TaskId::Sentiment => self.sentiment = label,
            TaskId::Joint => {}
        }
    }

    /// Class index for a head, deriving the joint class from bias and stereotype.
    pub fn class_index(&self, task: TaskId) -> Option<usize> {
        match task {
            TaskId::Joint => match (self.bias, self.stereotype) {
                (Some(b), Some(s)) => Some(crate::labels::to_joint(b, s).index()),
                _ => None,
            },
            t => self.label(t).map(BinaryLabel::index),
        }
    }
}

/// Checks the record-level invariants: non-empty text and unique ids.
pub fn validate_records(records: &[SentenceRecord]) -> Result<(), CorpusError> {
    let mut seen = std::collections::HashSet::new();
    for r in records {
        if r.text.trim().is_empty() {
            return Err(CorpusError::MalformedInput(format!(
                "record {} has empty text",
                r.id
            )));
        }
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}
