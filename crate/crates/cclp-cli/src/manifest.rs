//! Run manifests: the resolved configuration, a content hash over every
//! input that determines the outputs, the output paths, and wall-clock
//! timings. Re-running a command whose manifest matches (everything but
//! the timings) reproduces the other output files byte for byte.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 over the command name, the canonical config JSON, and the
    /// raw bytes of any input files.
    pub content_hash: String,
    pub outputs: Vec<String>,
    pub wall_clock_ms: u128,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: u64,
    hasher: Sha256,
    outputs: Vec<String>,
    started: std::time::Instant,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<Self, CliError> {
        let config = serde_json::to_value(config)?;
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(serde_json::to_string(&config)?.as_bytes());
        Ok(ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            hasher,
            outputs: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    /// Folds an input file's bytes into the content hash.
    pub fn hash_input_file(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)?;
        self.hasher.update(path.display().to_string().as_bytes());
        self.hasher.update(&bytes);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self) -> RunManifest {
        let digest = self.hasher.finalize();
        let content_hash = digest.iter().fold(String::new(), |mut acc, b| {
            acc.push_str(&format!("{:02x}", b));
            acc
        });
        RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            content_hash,
            outputs: self.outputs,
            wall_clock_ms: self.started.elapsed().as_millis(),
        }
    }
}
