//! Per-run manifest: resolved config, file digests and stage timings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Wall time per stage in milliseconds, in execution order.
    pub timings_ms: Vec<(String, f64)>,
}

/// Collects inputs, outputs and timings while a subcommand runs.
pub struct Recorder {
    command: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: Vec<(String, f64)>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        let path = path.into();
        if !self.inputs.contains(&path) {
            self.inputs.push(path);
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        let path = path.into();
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }

    pub fn outputs(&self) -> &[PathBuf] {
        &self.outputs
    }

    /// Runs `f` as a named, timed stage.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f(self)?;
        self.timings.push((name.to_string(), start.elapsed().as_secs_f64() * 1e3));
        Ok(out)
    }

    /// Writes `manifest-<command>.json` into `dir` and returns its path.
    pub fn finish(self, dir: &Path, config: BTreeMap<String, String>) -> Result<PathBuf, CliError> {
        let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>, CliError> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: p.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            command: self.command.clone(),
            config,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
            timings_ms: self.timings,
        };
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Invariant(e.to_string()))? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
