//! Run directories and error records.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

pub const DEFAULT_RUN_ROOT: &str = "runs";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const ERROR_FILE: &str = "error.json";
pub const RUN_FILE: &str = "run.json";

/// A freshly created `<root>/<command>-NNN` directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Claims the next free index for `command` under `root`.
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating run root {}", root.display()))?;
        for i in 1..10_000 {
            let path = root.join(format!("{command}-{i:03}"));
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(Self { path }),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        bail!("no free run directory for {command} under {}", root.display())
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.join(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, serde_json::to_string_pretty(value)? + "\n")
    }

    pub fn snapshot(&self, cfg: &RunConfig) -> Result<()> {
        self.write(CONFIG_SNAPSHOT, cfg.to_toml()?)
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub exit_code: i32,
    pub error: String,
    /// Causes, outermost first.
    pub chain: Vec<String>,
}

impl ErrorRecord {
    pub fn new(command: &str, exit_code: i32, err: &anyhow::Error) -> Self {
        Self {
            command: command.to_string(),
            exit_code,
            error: err.to_string(),
            chain: err.chain().map(|c| c.to_string()).collect(),
        }
    }
}

/// Root from `--out`, the environment, or [`DEFAULT_RUN_ROOT`].
pub fn run_root(out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_RUN_ROOT))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_increase_and_never_reuse() {
        let t = tempfile::tempdir().unwrap();
        let a = RunDir::create(t.path(), "eval").unwrap();
        let b = RunDir::create(t.path(), "eval").unwrap();
        let c = RunDir::create(t.path(), "train").unwrap();
        assert!(a.path.ends_with("eval-001"));
        assert!(b.path.ends_with("eval-002"));
        assert!(c.path.ends_with("train-001"));
    }
}
