//! Run directories: exclusive ownership through a lock file and a manifest
//! of content hashes written when the run finishes.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files;

pub const LOCK_FILE: &str = "run.lock";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TOKENIZER_DIR: &str = "tokenizer";

/// A run directory held by this process until dropped.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates or reopens `path` and takes its lock. Fails if another process
    /// holds the lock or the run already finished.
    pub fn acquire(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        if path.join(MANIFEST_FILE).exists() {
            return Err(CliError::config(format!(
                "{} already holds a finished run; choose another run_id or output root",
                path.display()
            )));
        }
        let lock = path.join(LOCK_FILE);
        let mut f = OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::runtime(format!(
                    "{} is locked by another process (remove {} if that process is gone)",
                    path.display(),
                    lock.display()
                ))
            } else {
                CliError::io(&lock, e)
            }
        })?;
        writeln!(f, "{}", std::process::id()).map_err(|e| CliError::io(&lock, e))?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.path.join(rel)
    }

    /// Hashes every file except the lock and writes the manifest.
    pub fn finish(self, run_id: &str) -> Result<Manifest> {
        let files = files::list_files(&self.path)?
            .into_iter()
            .filter(|p| p != Path::new(LOCK_FILE) && p != Path::new(MANIFEST_FILE))
            .map(|rel| {
                let sha256 = files::sha256_file(&self.path.join(&rel))?;
                Ok(ManifestEntry {
                    path: rel.to_string_lossy().replace('\\', "/"),
                    sha256,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            run_id: run_id.to_string(),
            files,
        };
        files::write_json(&self.path.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK_FILE));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub files: Vec<ManifestEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("r");
        let a = RunDir::acquire(&dir).unwrap();
        assert!(RunDir::acquire(&dir).is_err());
        files::write(&a.join("x.txt"), "hello").unwrap();
        let m = a.finish("r").unwrap();
        assert_eq!(m.files.len(), 1);
        assert!(!dir.join(LOCK_FILE).exists());
        assert_eq!(RunDir::acquire(&dir).unwrap_err().exit_code(), 2);
    }
}
