use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputChecksum {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub experiment: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub started_unix_ms: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix_ms: Option<u128>,
    pub status: RunStatus,
    /// Modelling conventions in effect, e.g. how the loss coordinate is
    /// coupled to the single-letter draw.
    pub flags: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<OutputChecksum>,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn begin(config: &ExperimentConfig) -> Self {
        let mut flags = BTreeMap::new();
        flags.insert(
            "v3_coupling".into(),
            "independent length-n training draw plus one fresh inference pair per replicate".into(),
        );
        flags.insert("loss_mode".into(), config.loss_mode.as_str().into());
        flags.insert(
            "expected_error_sigma".into(),
            "per-replicate empirical Gram matrix, averaged over replicates".into(),
        );
        flags.insert(
            "blocklength_correction".into(),
            "2 log2(n)/n in the loss constraint; twice that added to the rate".into(),
        );
        flags.insert("conditional_density_means".into(), "alpha beta^T y* and alpha x".into());
        if let Some(f) = config.faults.sigma_phi2_factor {
            flags.insert("fault_sigma_phi2_factor".into(), format!("{f}"));
        }
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            experiment: config.experiment.as_str().into(),
            config_sha256: config.sha256(),
            master_seed: config.seed,
            started_unix_ms: unix_ms(),
            finished_unix_ms: None,
            status: RunStatus::Running,
            flags,
            notes: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, file: &str, bytes: &[u8]) {
        self.outputs.push(OutputChecksum {
            file: file.into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish(&mut self, status: RunStatus) {
        self.status = status;
        self.finished_unix_ms = Some(unix_ms());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(|e| crate::error::Error::Io(format!("unreadable manifest: {}", e.message())))
    }

    /// Recompute each recorded checksum; returns the files that differ.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            let bytes = std::fs::read(dir.join(&o.file))?;
            if sha256_hex(&bytes) != o.sha256 {
                bad.push(o.file.clone());
            }
        }
        Ok(bad)
    }
}
