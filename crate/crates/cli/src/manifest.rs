//! Run manifests and the output directory they describe.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputRecord {
    pub fn hash_file(role: &str, path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        Ok(Self { role: role.to_string(), path: path.to_path_buf(), sha256: cftc::sha256_hex(&bytes) })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Every setting in effect, defaults included.
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>, inputs: Vec<InputRecord>, seed: u64) -> Self {
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs,
            outputs: Vec::new(),
            out_dir: PathBuf::new(),
            seed,
            created_unix,
        }
    }
}

/// Parses `key = value` text into an ordered map.
pub fn config_map(kv_text: &str) -> CliResult<BTreeMap<String, String>> {
    let kv = cftc::kv::KeyValues::parse(kv_text)?;
    Ok(kv.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

/// An output directory whose manifest has been written. Artifacts can only be
/// written through it, and never over one of the run's inputs.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    protected: Vec<PathBuf>,
}

impl OutputDir {
    /// Creates the directory and writes the manifest listing `outputs`.
    pub fn create(root: &Path, mut manifest: RunManifest, outputs: &[&str]) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(CliError::io(root))?;
        let protected: Vec<PathBuf> =
            manifest.inputs.iter().filter_map(|i| std::fs::canonicalize(&i.path).ok()).collect();
        let dir = Self { root: root.to_path_buf(), protected };
        manifest.out_dir = root.to_path_buf();
        manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = dir.path(MANIFEST_FILE)?;
        std::fs::write(&path, json + "\n").map_err(CliError::io(&path))?;
        Ok(dir)
    }

    /// Target path for an artifact, refusing to clobber an input.
    pub fn path(&self, name: &str) -> CliResult<PathBuf> {
        let target = self.root.join(name);
        if let Ok(canonical) = std::fs::canonicalize(&target) {
            if self.protected.contains(&canonical) {
                return Err(CliError::Input(format!(
                    "refusing to overwrite input file {}; choose another --out",
                    target.display()
                )));
            }
        }
        Ok(target)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(name)?;
        std::fs::write(&path, contents).map_err(CliError::io(&path))?;
        Ok(path)
    }
}
