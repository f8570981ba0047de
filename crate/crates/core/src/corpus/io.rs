//! Delimited-text readers and writers for corpus files.
//!
//! Canonical dataset columns: `id,text,bias,stereotype,category,source`, plus
//! an optional trailing `sentiment` column. Labels use the canonical names
//! (`bias`/`no_bias`, `stereotype`/`no_stereotype`, `positive`/`negative`);
//! an empty cell means "not yet labeled".

use super::{AnnotationRecord, Category, CorpusError, SentenceRecord, StereoSetDocument};
use crate::labels::{parse_label, BinaryLabel, TaskId};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<std::fs::File, CorpusError> {
    std::fs::File::open(path).map_err(|e| io_err(path, e))
}

/// Reads any headered CSV into one map per row.
pub fn read_rows_from<R: Read>(
    reader: R,
    origin: &Path,
) -> Result<Vec<BTreeMap<String, String>>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(origin, e.to_string()))?
        .clone();
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| parse_err(origin, e.to_string()))?;
            Ok(headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.trim().to_string(), v.to_string()))
                .collect())
        })
        .collect()
}

pub fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, CorpusError> {
    read_rows_from(open(path)?, path)
}

fn optional_label(raw: Option<&String>, task: TaskId) -> Result<Option<BinaryLabel>, String> {
    match raw.map(|s| s.trim()) {
        None | Some("") => Ok(None),
        Some(s) => parse_label(s, task).map(Some).map_err(|e| e.to_string()),
    }
}

pub fn records_from_rows(
    rows: &[BTreeMap<String, String>],
    origin: &Path,
) -> Result<Vec<SentenceRecord>, CorpusError> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let get = |name: &str| {
                row.get(name).ok_or_else(|| CorpusError::Schema {
                    row: i,
                    message: format!("{}: missing column {name:?}", origin.display()),
                })
            };
            let schema = |message: String| CorpusError::Schema { row: i, message };
            let id = get("id")?.trim().to_string();
            let text = get("text")?.clone();
            if text.trim().is_empty() {
                return Err(schema(format!("record {id} has empty text")));
            }
            Ok(SentenceRecord {
                bias: optional_label(row.get("bias"), TaskId::Bias).map_err(schema)?,
                stereotype: optional_label(row.get("stereotype"), TaskId::Stereotype)
                    .map_err(schema)?,
                sentiment: optional_label(row.get("sentiment"), TaskId::Sentiment)
                    .map_err(schema)?,
                category: Category::normalize(get("category")?),
                source: get("source")?.parse()?,
                id,
                text,
            })
        })
        .collect()
}

pub fn read_dataset(path: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    let rows = read_rows(path)?;
    let recs = records_from_rows(&rows, path)?;
    super::validate_records(&recs)?;
    Ok(recs)
}

pub fn write_dataset_to<W: Write>(records: &[SentenceRecord], writer: W) -> Result<(), csv::Error> {
    let with_sentiment = records.iter().any(|r| r.sentiment.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "text", "bias", "stereotype", "category", "source"];
    if with_sentiment {
        header.push("sentiment");
    }
    w.write_record(&header)?;
    let name = |task: TaskId, l: Option<BinaryLabel>| l.map(|l| task.label_name(l)).unwrap_or("");
    for r in records {
        let mut row = vec![
            r.id.as_str(),
            r.text.as_str(),
            name(TaskId::Bias, r.bias),
            name(TaskId::Stereotype, r.stereotype),
            r.category.as_str(),
            r.source.as_str(),
        ];
        if with_sentiment {
            row.push(name(TaskId::Sentiment, r.sentiment));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(records: &[SentenceRecord], path: &Path) -> Result<(), CorpusError> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    write_dataset_to(records, f).map_err(|e| parse_err(path, e.to_string()))
}

/// Annotation file columns: `sentence_id,annotator_id,bias_vote,stereotype_vote`.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CorpusError> {
    read_rows(path)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let get = |name: &str| {
                row.get(name).ok_or_else(|| CorpusError::Schema {
                    row: i,
                    message: format!("{}: missing column {name:?}", path.display()),
                })
            };
            let vote = |name: &str, task| -> Result<BinaryLabel, CorpusError> {
                parse_label(get(name)?, task).map_err(|e| CorpusError::Schema {
                    row: i,
                    message: e.to_string(),
                })
            };
            Ok(AnnotationRecord {
                sentence_id: get("sentence_id")?.trim().to_string(),
                annotator_id: get("annotator_id")?.trim().to_string(),
                bias_vote: vote("bias_vote", TaskId::Bias)?,
                stereotype_vote: vote("stereotype_vote", TaskId::Stereotype)?,
            })
        })
        .collect()
}

/// Accepts either a bare document or one wrapped in `{"data": ...}` as in the
/// public StereoSet release.
pub fn read_stereoset(path: &Path) -> Result<StereoSetDocument, CorpusError> {
    let mut s = String::new();
    open(path)?
        .read_to_string(&mut s)
        .map_err(|e| io_err(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&s).map_err(|e| parse_err(path, e.to_string()))?;
    let inner = value.get("data").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| parse_err(path, e.to_string()))
}
