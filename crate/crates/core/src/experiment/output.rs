use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nn::{checkpoint, ParamVec};
use crate::Result;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub files: Vec<ManifestEntry>,
}

/// An experiment's output directory. Every write is recorded for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        self.record(name);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_checkpoint(&mut self, name: &str, params: &ParamVec) -> Result<()> {
        self.write_bytes(name, &checkpoint::to_bytes(params))
    }

    /// Hash everything written so far into `manifest.json`.
    pub fn finish(mut self, command: &str) -> Result<Manifest> {
        self.written.sort();
        let files = self
            .written
            .iter()
            .map(|name| {
                let bytes = fs::read(self.path(name))?;
                Ok(ManifestEntry { path: name.clone(), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { command: command.to_string(), files };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.path(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// Recompute the hashes listed in `dir/manifest.json`; returns the paths that differ.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let mut bad = Vec::new();
    for entry in manifest.files {
        match fs::read(dir.join(&entry.path)) {
            Ok(bytes) if hex::encode(Sha256::digest(&bytes)) == entry.sha256 => {}
            _ => bad.push(entry.path),
        }
    }
    Ok(bad)
}
