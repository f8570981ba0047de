use super::backend::Backend;
use super::{BackendHandle, Encoded, Family, HiddenBatch, ModelError};
use ndarray::{s, Array2, Array3, Axis};
use serde::Deserialize;
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

#[derive(Deserialize)]
struct FeatureLine {
    text: String,
    /// `[tokens, hidden]` last-layer states, unpadded.
    states: Vec<Vec<f64>>,
}

/// Frozen backend serving last-layer states exported from an external model
/// (one JSON object per line: `{"text": ..., "states": [[...], ...]}`).
pub struct FeatureFileBackend {
    handle: BackendHandle,
    table: HashMap<String, Array2<f64>>,
}

impl FeatureFileBackend {
    pub fn load(backend_id: &str, family: Family, path: &Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ModelError::Backend(format!("{}: {e}", path.display())))?;
        let mut table = HashMap::new();
        let mut hidden = None;
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ModelError::Backend(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: FeatureLine = serde_json::from_str(&line)
                .map_err(|e| ModelError::Backend(format!("{}:{}: {e}", path.display(), n + 1)))?;
            let t = rec.states.len();
            let h = rec.states.first().map(Vec::len).unwrap_or(0);
            if t == 0 || h == 0 || rec.states.iter().any(|r| r.len() != h) {
                return Err(ModelError::Shape(format!(
                    "{}:{}: ragged or empty states",
                    path.display(),
                    n + 1
                )));
            }
            if *hidden.get_or_insert(h) != h {
                return Err(ModelError::Shape(format!(
                    "{}:{}: hidden size {h} differs from earlier lines",
                    path.display(),
                    n + 1
                )));
            }
            let flat: Vec<f64> = rec.states.into_iter().flatten().collect();
            let m = Array2::from_shape_vec((t, h), flat).expect("checked shape");
            table.insert(rec.text, m);
        }
        let hidden_size = hidden.ok_or_else(|| {
            ModelError::Backend(format!("{}: no feature rows", path.display()))
        })?;
        Ok(FeatureFileBackend {
            handle: BackendHandle {
                backend_id: backend_id.to_string(),
                hidden_size,
                family,
            },
            table,
        })
    }
}

impl Backend for FeatureFileBackend {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn encode(&self, texts: &[&str]) -> Result<Encoded, ModelError> {
        let rows: Vec<&Array2<f64>> = texts
            .iter()
            .map(|t| {
                self.table
                    .get(*t)
                    .ok_or_else(|| ModelError::Backend(format!("no features for text {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        let t_max = rows.iter().map(|m| m.nrows()).max().unwrap_or(0);
        let h = self.handle.hidden_size;
        let mut states = Array3::zeros((rows.len(), t_max, h));
        let mut mask = Array2::from_elem((rows.len(), t_max), false);
        for (i, m) in rows.iter().enumerate() {
            states
                .index_axis_mut(Axis(0), i)
                .slice_mut(s![..m.nrows(), ..])
                .assign(*m);
            mask.row_mut(i).slice_mut(s![..m.nrows()]).fill(true);
        }
        Ok(Encoded {
            batch: HiddenBatch::new(states, mask)?,
            truncated: 0,
        })
    }
}
