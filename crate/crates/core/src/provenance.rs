//! Sidecar manifests tying each artifact to its inputs by SHA-256.
//!
//! `<artifact>.manifest` is key = value text:
//!
//! ```text
//! format = offroad-manifest
//! command = train
//! artifact = model.ckpt
//! artifact_sha256 = …
//! input.dataset = data.bin
//! input.dataset.sha256 = …
//! input.dataset.manifest_sha256 = …   (when the input has a manifest)
//! [config]
//! …resolved run configuration…
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
    pub manifest_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub artifact: String,
    pub artifact_sha256: String,
    pub inputs: Vec<InputRecord>,
    pub config_text: String,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::from("format = offroad-manifest\n");
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "artifact = {}", self.artifact);
        let _ = writeln!(s, "artifact_sha256 = {}", self.artifact_sha256);
        for i in &self.inputs {
            let _ = writeln!(s, "input.{} = {}", i.role, i.path);
            let _ = writeln!(s, "input.{}.sha256 = {}", i.role, i.sha256);
            if let Some(m) = &i.manifest_sha256 {
                let _ = writeln!(s, "input.{}.manifest_sha256 = {m}", i.role);
            }
        }
        s.push_str("[config]\n");
        s.push_str(&self.config_text);
        s
    }

    /// Recorded artifact hash, if `text` is a manifest.
    pub fn recorded_hash(text: &str) -> Option<&str> {
        if text.lines().next() != Some("format = offroad-manifest") {
            return None;
        }
        text.lines().find_map(|l| l.strip_prefix("artifact_sha256 = "))
    }
}

/// Describes an input artifact by hash. When the input carries a manifest
/// whose recorded hash disagrees with the file, a warning is returned
/// alongside.
pub fn describe_input(role: &str, path: &Path) -> Result<(InputRecord, Option<String>)> {
    let sha256 = file_sha256(path)?;
    let mpath = manifest_path(path);
    let (manifest_sha256, warning) = match std::fs::read_to_string(&mpath) {
        Ok(text) => {
            let warning = match Manifest::recorded_hash(&text) {
                Some(h) if h == sha256 => None,
                Some(h) => Some(format!("{} was modified after it was written (manifest hash {h}, file hash {sha256})", path.display())),
                None => Some(format!("{} is not a valid manifest", mpath.display())),
            };
            (Some(sha256_hex(text.as_bytes())), warning)
        }
        Err(_) => (None, Some(format!("{} has no manifest; provenance chain is broken", path.display()))),
    };
    Ok((
        InputRecord {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
            manifest_sha256,
        },
        warning,
    ))
}

/// Writes `<artifact>.manifest` for an artifact already on disk.
pub fn write_manifest(command: &str, artifact: &Path, inputs: Vec<InputRecord>, config_text: &str) -> Result<Manifest> {
    let manifest = Manifest {
        command: command.to_string(),
        artifact: artifact.file_name().map_or_else(|| artifact.display().to_string(), |n| n.to_string_lossy().into_owned()),
        artifact_sha256: file_sha256(artifact)?,
        inputs,
        config_text: config_text.to_string(),
    };
    let path = manifest_path(artifact);
    std::fs::write(&path, manifest.to_text()).map_err(|e| CoreError::io(&path, e))?;
    Ok(manifest)
}
