//! Artifact layout under the working directory and the run lock.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use jutepest_core::backbone::BackboneId;
use jutepest_core::split::Split;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn effective_config(&self) -> PathBuf {
        self.root.join("effective_config.toml")
    }

    /// Ingest output (no split assignments).
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.tsv")
    }

    pub fn split_manifest(&self) -> PathBuf {
        self.root.join("split.tsv")
    }

    pub fn processed_dir(&self) -> PathBuf {
        self.root.join("processed")
    }

    pub fn augmented_dir(&self, split: Split) -> PathBuf {
        self.root.join("augmented").join(split.as_str())
    }

    pub fn provenance(&self) -> PathBuf {
        self.root.join("augmented").join("provenance.tsv")
    }

    pub fn model_dir(&self, id: BackboneId) -> PathBuf {
        self.root.join("models").join(id.as_str())
    }

    pub fn checkpoint(&self, id: BackboneId) -> PathBuf {
        self.model_dir(id).join("checkpoint.jpck")
    }

    pub fn history(&self, id: BackboneId) -> PathBuf {
        self.model_dir(id).join("history.tsv")
    }

    pub fn eval_dir(&self, id: BackboneId) -> PathBuf {
        self.root.join("eval").join(id.as_str())
    }

    pub fn run_artifact(&self, id: BackboneId) -> PathBuf {
        self.eval_dir(id).join("run.json")
    }

    pub fn predictions(&self, id: BackboneId) -> PathBuf {
        self.eval_dir(id).join("predictions.tsv")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report_dir(&self, id: BackboneId) -> PathBuf {
        self.reports_dir().join(id.as_str())
    }

    pub fn comparison(&self) -> PathBuf {
        self.reports_dir().join("comparison.csv")
    }

    pub fn lock_path(&self) -> PathBuf {
        self.root.join(".lock")
    }

    /// Takes the exclusive per-workdir lock; released on drop.
    pub fn lock(&self) -> Result<RunLock> {
        fs::create_dir_all(&self.root).map_err(Error::io(&self.root))?;
        let path = self.lock_path();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::Io { path, source: e }),
        }
    }
}

#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Removes `dir` if present so a stage never mixes old and new outputs.
pub fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::create_dir_all(dir).map_err(Error::io(dir))
}
