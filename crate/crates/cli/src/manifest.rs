//! Run manifests: everything needed to replay a command and check that its
//! inputs have not changed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::{CliError, CliResult};
use crate::output::{read_text, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn verify(&self) -> CliResult<()> {
        let now = Self::hash(&self.path)?;
        if now.sha256 != self.sha256 {
            return Err(CliError::Input(format!(
                "input {} changed since the run was recorded",
                self.path.display()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySettings {
    pub incubation: [f64; 2],
    pub onset_to_death: [f64; 2],
    pub samples: usize,
    pub seed: u64,
    pub max_delay: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub n_iterations: usize,
    pub adapt_start: usize,
    pub burn_in: usize,
    pub initial_step_scales: [f64; 4],
    pub epsilon: f64,
    pub keep_burn_in: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub region_id: String,
    pub p: f64,
    pub chain_index: usize,
    pub seed: u64,
    /// Relative to the run directory.
    pub file: PathBuf,
    /// Starting `(beta, gamma, T0, phi)`.
    pub init: [f64; 4],
    pub acceptance_rate: f64,
    pub post_adaptation_acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub invocation: Command,
    pub inputs: Vec<InputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSettings>,
    #[serde(default)]
    pub ifr_scenarios: Vec<f64>,
    #[serde(default)]
    pub chains: Vec<ChainRecord>,
    /// Derived seeds not stored in the invocation, by purpose.
    #[serde(default)]
    pub derived_seeds: Vec<(String, u64)>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(invocation: Command) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            inputs: Vec::new(),
            delay: None,
            sampler: None,
            ifr_scenarios: Vec::new(),
            chains: Vec::new(),
            derived_seeds: Vec::new(),
            notes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn parse_manifest(text: &str) -> CliResult<RunManifest> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    parse_manifest(&read_text(path)?)
}
