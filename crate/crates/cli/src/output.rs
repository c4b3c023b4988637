//! File emission with content digests, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use consensus_core::protocol::{Severity, ValidationReport};
use consensus_core::riccati::RiccatiSolution;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_config, ConfigError, ExperimentConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Writes files into one directory and keeps an inventory of what was written.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            name: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSection {
    pub p: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub residual: f64,
    pub lambda_max_p: f64,
}

impl GainSection {
    pub fn from_solution(sol: &RiccatiSolution) -> Self {
        Self {
            p: rows(&sol.p),
            k: rows(&sol.k),
            gamma: rows(&sol.gamma),
            residual: sol.residual,
            lambda_max_p: sol.lambda_max_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(flatten)]
    pub gains: GainSection,
    pub iterations: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub severity: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSection {
    pub passed: bool,
    pub overridden: bool,
    pub checks: Vec<CheckEntry>,
}

impl ValidationSection {
    pub fn new(report: &ValidationReport, overridden: bool) -> Self {
        Self {
            passed: report.passed(),
            overridden,
            checks: report
                .checks
                .iter()
                .map(|c| CheckEntry {
                    name: c.name.clone(),
                    severity: match c.severity {
                        Severity::Hard => "hard".into(),
                        Severity::Warning => "warning".into(),
                    },
                    passed: c.passed,
                    detail: c.detail.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    pub tool_version: String,
    pub status: String,
    pub master_seed: u64,
    pub seed_scheme: String,
    pub paths: usize,
    pub threads: Option<usize>,
    pub blown_up_paths: Vec<u64>,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunSection,
    pub sare: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_p: Option<GainSection>,
    pub validation: ValidationSection,
    pub files: Vec<FileEntry>,
    pub config: ExperimentConfig,
}

pub const SEED_SCHEME: &str = "ChaCha8 keyed by splitmix64(master_seed); path k uses stream k; \
uniform x0 draws use stream 2^64-1";

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

/// Re-parses the config echoed in a manifest.
pub fn config_from_manifest(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let config = doc.get("config").ok_or_else(|| ConfigError::MissingKey("config".into()))?;
    parse_config(&toml::to_string(config).expect("table serializes"))
}
