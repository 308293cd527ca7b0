//! Provenance record written next to every command's outputs, before them.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "qrlob-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    /// sha256 of the canonical JSON of `config`.
    pub config_digest: String,
    pub config: Config,
    pub model: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_digest: config.digest(),
            config: config.clone(),
            model: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    #[cfg(test)]
    pub fn verify(&self) -> bool {
        self.config.digest() == self.config_digest
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::from(e).context(dir.display()))?;
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n").map_err(|e| CliError::from(e).context(path.display()))
    }

    #[cfg(test)]
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// `out.log` -> `out.log.manifest.json`.
pub fn manifest_path_for_file(out: &Path) -> PathBuf {
    let mut name: OsString = out.file_name().map(OsString::from).unwrap_or_else(|| "out".into());
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn manifest_path_for_dir(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}
