//! Workspace layout: `data/`, `runs/<run-id>/`, `reports/`.
//!
//! A run id is `<UTC timestamp>-<first 12 hex digits of the config hash>`.
//! A run directory is finished once it holds a `COMPLETE` marker and is
//! never written to afterwards.

use super::CliError;
use chrono::Utc;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const WORKSPACE_ENV: &str = "STEREOMTL_WORKSPACE";
pub const COMPLETE_MARKER: &str = "COMPLETE";
pub const META_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Train,
    Grid,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub run_id: String,
    pub kind: RunKind,
    /// Row name in report tables.
    pub label: String,
    pub config_hash: String,
    pub created: String,
    #[serde(default)]
    pub mode: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
}

pub fn timestamp() -> String {
    Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(super::ExitKind::Other, e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let s = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn ensure(&self) -> Result<(), CliError> {
        for d in [self.data_dir(), self.runs_dir(), self.reports_dir()] {
            std::fs::create_dir_all(&d)
                .map_err(|e| CliError::config(format!("workspace {}: {e}", d.display())))?;
        }
        Ok(())
    }

    /// Creates a fresh run directory; a numeric suffix keeps ids unique.
    pub fn new_run(&self, config_hash: &str) -> Result<RunDir, CliError> {
        let base = format!("{}-{}", timestamp(), &config_hash[..12.min(config_hash.len())]);
        let mut id = base.clone();
        let mut k = 2;
        loop {
            let path = self.runs_dir().join(&id);
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { id, path }),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    id = format!("{base}-{k}");
                    k += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Fresh directory under `reports/`.
    pub fn new_report(&self, name: &str) -> Result<PathBuf, CliError> {
        let base = format!("{}-{name}", timestamp());
        let mut path = self.reports_dir().join(&base);
        let mut k = 2;
        while path.exists() {
            path = self.reports_dir().join(format!("{base}-{k}"));
            k += 1;
        }
        std::fs::create_dir_all(&path)?;
        Ok(path)
    }

    pub fn open_run(&self, id: &str) -> Result<RunDir, CliError> {
        let path = self.runs_dir().join(id);
        if !path.is_dir() {
            return Err(CliError::data(format!("no run {id} under {}", self.runs_dir().display())));
        }
        Ok(RunDir {
            id: id.to_string(),
            path,
        })
    }

    /// All run directories, oldest first.
    pub fn runs(&self) -> Result<Vec<RunDir>, CliError> {
        let mut out: Vec<RunDir> = std::fs::read_dir(self.runs_dir())?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| RunDir {
                id: e.file_name().to_string_lossy().into_owned(),
                path: e.path(),
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// A completed run whose config hash matches.
    pub fn find_complete(&self, config_hash: &str) -> Result<Option<RunDir>, CliError> {
        for r in self.runs()? {
            if r.is_complete() {
                if let Ok(meta) = r.meta() {
                    if meta.config_hash == config_hash {
                        return Ok(Some(r));
                    }
                }
            }
        }
        Ok(None)
    }

    /// Resolves a path from a config file: absolute paths as is, otherwise
    /// relative to the config's directory, then the workspace root, then
    /// `data/`. Falls back to the config-relative form.
    pub fn resolve(&self, config_dir: &Path, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            return p.to_path_buf();
        }
        for base in [config_dir.to_path_buf(), self.root.clone(), self.data_dir()] {
            let c = base.join(p);
            if c.exists() {
                return c;
            }
        }
        config_dir.join(p)
    }
}

impl RunDir {
    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn is_complete(&self) -> bool {
        self.file(COMPLETE_MARKER).exists()
    }

    pub fn meta(&self) -> Result<RunMeta, CliError> {
        read_json(&self.file(META_FILE))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        self.guard()?;
        write_json(&self.file(name), value)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        self.guard()?;
        let p = self.file(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(p, text)?;
        Ok(())
    }

    pub fn mark_complete(&self) -> Result<(), CliError> {
        self.write_text(COMPLETE_MARKER, &format!("{}\n", Utc::now().to_rfc3339()))
    }

    fn guard(&self) -> Result<(), CliError> {
        if self.is_complete() {
            return Err(CliError::new(
                super::ExitKind::Other,
                format!("run {} is complete and read-only", self.id),
            ));
        }
        Ok(())
    }
}
