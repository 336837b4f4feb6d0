use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use momask_core::metrics::MetricReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Record of one command run. Paths are stored relative to the output
/// directory so reruns into different directories compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Input file name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the run directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
}

/// Collects outputs of a run and writes them together with the manifest.
pub struct RunWriter {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn new(command: &str, root: &Path, config: &RunConfig) -> Self {
        RunWriter {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: config.seed,
                config: config.clone(),
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                details: BTreeMap::new(),
                metrics: None,
            },
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn input(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.manifest.inputs.insert(name.into(), sha256_hex(bytes));
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.manifest.details.insert(key.to_string(), v);
    }

    pub fn metrics(&mut self, report: MetricReport) {
        self.manifest.metrics = Some(report);
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.insert(relative.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let json = serde_json::to_string_pretty(&self.manifest).map_err(|e| CliError::Data(e.to_string()))?;
        write_atomic(&self.root.join("manifest.json"), json.as_bytes())?;
        Ok(self.manifest)
    }
}
