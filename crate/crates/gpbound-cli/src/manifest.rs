//! Run manifest: what a run produced, written atomically when it finishes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    command: String,
    config_path: Option<String>,
    seed: u64,
    output_dir: PathBuf,
    started: Instant,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, output_dir: &Path) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config_path: None,
            seed,
            output_dir: output_dir.to_path_buf(),
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn config_path(mut self, path: Option<&Path>) -> Self {
        self.config_path = path.map(|p| p.display().to_string());
        self
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes through a temporary file in the same directory so readers never
    /// observe a half-written manifest.
    pub fn write(self, path: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            config_path: self.config_path,
            seed: self.seed,
            output_dir: self.output_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json).with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(())
    }
}
