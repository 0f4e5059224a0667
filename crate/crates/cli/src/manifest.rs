use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record of one invocation: enough to re-run it and to check its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub flags: serde_json::Value,
    pub engine: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub derived_seeds: BTreeMap<String, u64>,
    pub duration_seconds: f64,
    pub counts: BTreeMap<String, u64>,
    pub settings: BTreeMap<String, serde_json::Value>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn new(subcommand: &str, flags: impl Serialize, engine: impl Serialize) -> Self {
        Self {
            tool: "windtunnel",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            engine: serde_json::to_value(engine).unwrap_or(serde_json::Value::Null),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            derived_seeds: BTreeMap::new(),
            duration_seconds: 0.0,
            counts: BTreeMap::new(),
            settings: BTreeMap::new(),
            warnings: Vec::new(),
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn count(&mut self, name: &str, value: impl TryInto<u64>) {
        self.counts.insert(name.to_string(), value.try_into().unwrap_or(u64::MAX));
    }

    pub fn setting(&mut self, name: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.settings.insert(name.to_string(), v);
        }
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.warnings.push(message);
    }

    pub fn write(mut self, path: &Path) -> Result<PathBuf, CliError> {
        if let Some(start) = self.started {
            self.duration_seconds = start.elapsed().as_secs_f64();
        }
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
        Ok(path.to_path_buf())
    }
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `<file>.manifest.json` next to a file output.
pub fn beside(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
