use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation, written beside its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: usize,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, threads: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            clock: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputFile {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: impl std::fmt::Display) {
        self.outputs.push(path.to_string());
    }

    /// Starts timing `phase`, closing the previous one.
    pub fn phase(&mut self, phase: &str) {
        self.stop();
        self.clock = Some((phase.to_string(), Instant::now()));
    }

    pub fn stop(&mut self) {
        if let Some((name, start)) = self.clock.take() {
            *self.timings.entry(name).or_default() += start.elapsed().as_secs_f64();
        }
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        self.stop();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn to_json(&mut self) -> String {
        self.stop();
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// `<file>.manifest.json` next to `file`.
pub fn beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}
