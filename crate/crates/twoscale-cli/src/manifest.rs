//! Output files and the manifests that make them reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

/// File contents produced by a command, written only after the command succeeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Artifact {
            name: name.into(),
            bytes,
        }
    }

    pub fn json(name: impl Into<String>, value: &impl Serialize) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        Artifact::new(name, bytes)
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool: String,
    pub version: String,
    /// UTC time in RFC 3339 form. A rerun keeps the recorded value.
    pub timestamp: String,
    pub config: Config,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, timestamp: String, artifacts: &[Artifact]) -> Self {
        RunManifest {
            command: command.to_string(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            config: config.clone(),
            outputs: artifacts
                .iter()
                .map(|a| OutputDigest {
                    file: a.name.clone(),
                    sha256: a.sha256(),
                    bytes: a.bytes.len(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("manifest {}: {e}", path.display())))
    }

    /// Files in `dir` whose digest differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            let bytes = std::fs::read(dir.join(&o.file))
                .map_err(|e| CliError::Io(format!("{}: {e}", o.file)))?;
            if hex::encode(Sha256::digest(&bytes)) != o.sha256 {
                bad.push(o.file.clone());
            }
        }
        Ok(bad)
    }
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn timestamp_now() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs() as i64)
                .unwrap_or(0)
        });
    chrono::DateTime::from_timestamp(secs, 0)
        .unwrap_or_default()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// Writes the artifacts and `<command>.manifest.json` into `dir`; returns the manifest path.
pub fn write_all(
    dir: &Path,
    command: &str,
    config: &Config,
    timestamp: String,
    artifacts: &[Artifact],
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, &a.bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let manifest = RunManifest::new(command, config, timestamp, artifacts);
    let m = Artifact::json(format!("{command}.manifest.json"), &manifest);
    let path = dir.join(&m.name);
    std::fs::write(&path, &m.bytes)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// CSV with a header row; floats use the shortest round-trip form.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        CsvTable { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self, name: impl Into<String>) -> Artifact {
        Artifact::new(name, self.writer.into_inner().expect("in-memory flush"))
    }
}

/// Formats an optional number, empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
