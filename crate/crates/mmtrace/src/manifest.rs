//! Reproducibility envelope embedded in every JSON report.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Digest of one file the command read or wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    /// Path as given on the command line.
    pub path: String,
    /// Lowercase hex SHA-256 of the exact bytes.
    pub sha256: String,
}

impl FileDigest {
    /// Hashes `bytes`.
    pub fn new(path: impl Into<String>, bytes: &[u8]) -> Self {
        Self { path: path.into(), sha256: hex::encode(Sha256::digest(bytes)) }
    }
}

/// Command, parameters, inputs, tool version and time of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    /// Subcommand name.
    pub command: String,
    /// Every parameter after defaults were applied.
    pub params: Value,
    /// Files read.
    pub inputs: Vec<FileDigest>,
    /// Files written.
    pub outputs: Vec<FileDigest>,
    /// `mmtrace` version.
    pub version: String,
    /// RFC 3339 UTC time of the run; the only field that varies between
    /// identical runs.
    pub timestamp: String,
}

impl RunManifest {
    /// Manifest stamped with the current time.
    pub fn new(command: &str, params: Value) -> Self {
        Self {
            command: command.into(),
            params,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}
