//! Output directories and their run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tlgs::mcmc::DiagnosticsSummary;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
/// Manifest fields that vary between identical runs.
pub const EXCLUDED_FIELDS: [&str; 1] = ["runtime"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub tlgs: String,
    pub manifest: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub started_at_unix: f64,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub versions: Versions,
    /// Effective configuration after flags, config file and defaults.
    pub config: serde_json::Value,
    pub config_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub warnings: Vec<String>,
    pub runtime: Runtime,
    pub excluded_fields: Vec<String>,
}

/// Collects inputs, outputs and diagnostics of one command, then writes
/// the manifest last.
pub struct Run {
    command: String,
    dir: PathBuf,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub warnings: Vec<String>,
    pub cache_hit: bool,
    workers: usize,
    started: SystemTime,
    clock: Instant,
}

impl Run {
    pub fn new(command: &str, dir: &Path, config: &impl Serialize, workers: usize) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let config = serde_json::to_value(config).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            command: command.to_string(),
            dir: dir.to_path_buf(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            diagnostics: None,
            warnings: Vec::new(),
            cache_hit: false,
            workers,
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Read an input file and record its digest.
    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Warn when the worst R-hat exceeds `limit`; true if it did.
    pub fn check_rhat(&mut self, limit: f64) -> bool {
        match &self.diagnostics {
            Some(d) if d.max_rhat > limit => {
                self.warnings.push(format!(
                    "max R-hat {:.3} ({}) exceeds {limit}",
                    d.max_rhat, d.max_rhat_column
                ));
                true
            }
            Some(_) => false,
            None => {
                self.warnings.push("convergence diagnostics unavailable".into());
                false
            }
        }
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let config_bytes = serde_json::to_vec(&self.config).map_err(|e| CliError::Config(e.to_string()))?;
        let manifest = RunManifest {
            command: self.command,
            versions: Versions {
                tlgs: env!("CARGO_PKG_VERSION").to_string(),
                manifest: 1,
            },
            config_fingerprint: sha256_hex(&config_bytes),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            diagnostics: self.diagnostics,
            warnings: self.warnings,
            runtime: Runtime {
                started_at_unix: self
                    .started
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs_f64())
                    .unwrap_or(0.0),
                wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
                workers: self.workers,
                cache_hit: self.cache_hit,
            },
            excluded_fields: EXCLUDED_FIELDS.iter().map(|s| s.to_string()).collect(),
        };
        let path = self.dir.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
