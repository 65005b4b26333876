use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
    /// Content includes wall-clock values and differs between identical runs.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub timing: bool,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

/// Collects written files for a command, then emits `manifest.json` listing them.
pub struct Recorder {
    command: String,
    dir: PathBuf,
    started_at: String,
    outputs: Vec<(PathBuf, bool)>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

impl Recorder {
    pub fn new(command: &str, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            command: command.into(),
            dir: dir.to_path_buf(),
            started_at: now(),
            outputs: Vec::new(),
        })
    }

    /// Writes `contents` to `name` under the output directory.
    pub fn write(&mut self, name: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.track(path.clone(), false);
        Ok(path)
    }

    pub fn write_timed(&mut self, name: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.write(name, contents)?;
        self.outputs.last_mut().expect("just tracked").1 = true;
        Ok(path)
    }

    /// Records a file written by other code.
    pub fn track(&mut self, path: PathBuf, timing: bool) {
        self.outputs.push((path, timing));
    }

    pub fn finish(self, config: serde_json::Value, seed: Option<u64>) -> Result<PathBuf> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (path, timing) in self.outputs {
            let Ok(data) = fs::read(&path) else {
                bail!("declared output {} is missing", path.display());
            };
            outputs.push(OutputFile {
                path: path.strip_prefix(&self.dir).unwrap_or(&path).to_path_buf(),
                bytes: data.len() as u64,
                sha256: format!("{:x}", Sha256::digest(&data)),
                timing,
            });
        }
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            config,
            seed,
            git_describe: git_describe(),
            started_at: self.started_at,
            finished_at: now(),
            outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
