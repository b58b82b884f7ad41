//! `manifest.json`: what each phase read and wrote, with content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// How a phase used an artifact it opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Access {
    /// Records and splits.
    Data,
    /// A model whose weights the phase may read.
    Model,
    /// A model reachable only through query access.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenedRecord {
    pub path: String,
    pub access: Access,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: String,
    pub seconds: f64,
    pub oracle_queries: u64,
    pub opened: Vec<OpenedRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub phases: Vec<PhaseRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    /// Reads a manifest. A missing or blank file is an empty manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(CliError::io(path, e)),
        };
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_json::from_str(&text)
            .map_err(|e| CliError::integrity(format!("corrupt manifest {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest is serializable");
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseRecord> {
        self.phases.iter().find(|p| p.phase == name)
    }

    /// Replaces the record of a rerun phase in place, otherwise appends.
    pub fn record(&mut self, rec: PhaseRecord) {
        match self.phases.iter_mut().find(|p| p.phase == rec.phase) {
            Some(slot) => *slot = rec,
            None => self.phases.push(rec),
        }
    }

    /// The phase that produced `artifact`, if any.
    pub fn producer(&self, artifact: &str) -> Option<(&PhaseRecord, &ArtifactRecord)> {
        self.phases
            .iter()
            .rev()
            .find_map(|p| p.artifacts.iter().find(|a| a.path == artifact).map(|a| (p, a)))
    }

    /// Re-hashes every listed artifact.
    pub fn verify(&self, out: &Path) -> Result<(), CliError> {
        for p in &self.phases {
            for a in &p.artifacts {
                check_artifact(out, a)?;
            }
        }
        Ok(())
    }
}

/// Fails with an integrity error unless the file matches its record.
pub fn check_artifact(out: &Path, a: &ArtifactRecord) -> Result<Vec<u8>, CliError> {
    let path = out.join(&a.path);
    let bytes = fs::read(&path).map_err(|e| {
        CliError::integrity(format!("artifact {} is unreadable: {e}", path.display()))
    })?;
    if sha256_hex(&bytes) != a.sha256 {
        return Err(CliError::integrity(format!(
            "artifact {} does not match its recorded hash",
            a.path
        )));
    }
    Ok(bytes)
}

/// Writes through a temporary sibling so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
