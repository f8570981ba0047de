use super::{Category, CorpusError, SentenceRecord, Source};
use crate::labels::{parse_label, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_BLANK_MARKER: &str = "BLANK";

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Fills the single blank marker of a fill-in-the-blank template.
pub fn assemble_intrasentence(
    template: &str,
    fill: &str,
    marker: &str,
) -> Result<String, CorpusError> {
    if marker.is_empty() {
        return Err(CorpusError::MalformedInput("empty blank marker".into()));
    }
    let found = template.matches(marker).count();
    if found != 1 {
        return Err(CorpusError::MalformedTemplate {
            template: template.to_string(),
            marker: marker.to_string(),
            found,
        });
    }
    if fill.contains(marker) {
        return Err(CorpusError::MalformedInput(format!(
            "fill {fill:?} contains the blank marker"
        )));
    }
    Ok(normalize_whitespace(&template.replacen(marker, fill, 1)))
}

pub fn assemble_intersentence(context: &str, completion: &str) -> Result<String, CorpusError> {
    let (context, completion) = (context.trim(), completion.trim());
    if context.is_empty() || completion.is_empty() {
        return Err(CorpusError::MalformedInput(
            "context and completion must both be non-empty".into(),
        ));
    }
    Ok(format!("{context} {completion}"))
}

fn field<'a>(row: &'a BTreeMap<String, String>, name: &str, idx: usize) -> Result<&'a str, CorpusError> {
    row.get(name)
        .map(String::as_str)
        .ok_or_else(|| CorpusError::Schema {
            row: idx,
            message: format!("missing field {name:?}"),
        })
}

/// Takes the `sent_more` side of every paired row. Labels stay unset until
/// annotations are merged in.
pub fn extract_crows_pairs(
    rows: &[BTreeMap<String, String>],
) -> Result<Vec<SentenceRecord>, CorpusError> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let text = field(row, "sent_more", i)?;
            field(row, "sent_less", i)?;
            if text.trim().is_empty() {
                return Err(CorpusError::Schema {
                    row: i,
                    message: "empty sent_more".into(),
                });
            }
            let id = row
                .get("id")
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().to_string())
                .unwrap_or_else(|| format!("crows-{i}"));
            let category = row
                .get("bias_type")
                .map(|c| Category::normalize(c))
                .unwrap_or(Category::None);
            Ok(SentenceRecord::new(id, normalize_whitespace(text), Source::CrowsPairs)
                .with_category(category))
        })
        .collect()
}

/// StereoSet-style document: intra-sentence items carry a template with a blank
/// marker; inter-sentence items carry a context sentence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StereoSetDocument {
    #[serde(default)]
    pub intrasentence: Vec<StereoSetItem>,
    #[serde(default)]
    pub intersentence: Vec<StereoSetItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StereoSetItem {
    pub id: String,
    #[serde(default)]
    pub bias_type: Option<String>,
    pub context: String,
    pub sentences: Vec<StereoSetOption>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StereoSetOption {
    #[serde(default)]
    pub id: Option<String>,
    /// Blank filler for intra-sentence items.
    #[serde(default)]
    pub fill: Option<String>,
    /// Full sentence (intra) or continuation (inter).
    #[serde(default)]
    pub sentence: Option<String>,
    pub gold_label: String,
}

/// Turns StereoSet items into records. Options whose `gold_label` is in
/// `include` are kept; intra options are filled into the template, inter
/// options are appended to the context.
pub fn extract_stereoset(
    doc: &StereoSetDocument,
    include: &[String],
    marker: &str,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    let keep = |label: &str| include.iter().any(|i| i.eq_ignore_ascii_case(label.trim()));
    let mut out = Vec::new();
    for (kind, items) in [
        (Source::StereosetIntra, &doc.intrasentence),
        (Source::StereosetInter, &doc.intersentence),
    ] {
        for item in items {
            let category = item
                .bias_type
                .as_deref()
                .map(Category::normalize)
                .unwrap_or(Category::None);
            for (k, opt) in item.sentences.iter().enumerate() {
                if !keep(&opt.gold_label) {
                    continue;
                }
                let text = match kind {
                    Source::StereosetIntra => match (&opt.fill, &opt.sentence) {
                        (Some(fill), _) => assemble_intrasentence(&item.context, fill, marker)?,
                        (None, Some(s)) => normalize_whitespace(s),
                        (None, None) => {
                            return Err(CorpusError::MalformedInput(format!(
                                "intrasentence item {} option {k} has neither fill nor sentence",
                                item.id
                            )))
                        }
                    },
                    _ => {
                        let completion = opt.sentence.as_deref().ok_or_else(|| {
                            CorpusError::MalformedInput(format!(
                                "intersentence item {} option {k} has no sentence",
                                item.id
                            ))
                        })?;
                        assemble_intersentence(&item.context, completion)?
                    }
                };
                let id = opt
                    .id
                    .clone()
                    .unwrap_or_else(|| format!("{}-{}", item.id, k));
                out.push(SentenceRecord::new(id, text, kind).with_category(category));
            }
        }
    }
    Ok(out)
}

/// Generic `(text, label)` rows such as ToxicBias, BABE or sst2 exports.
/// The label lands in the column for `task`.
pub fn labeled_rows(
    rows: &[BTreeMap<String, String>],
    task: TaskId,
    source: Source,
    id_prefix: &str,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let text = field(row, "text", i)?;
            let raw = field(row, "label", i)?;
            let label = parse_label(raw, task).map_err(|e| CorpusError::Schema {
                row: i,
                message: e.to_string(),
            })?;
            let id = row
                .get("id")
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().to_string())
                .unwrap_or_else(|| format!("{id_prefix}-{i}"));
            let mut rec = SentenceRecord::new(id, normalize_whitespace(text), source);
            if let Some(c) = row.get("category") {
                rec.category = Category::normalize(c);
            }
            rec.set_label(task, Some(label));
            Ok(rec)
        })
        .collect()
}
