//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    /// SHA-256 of the git blob encoding (`"blob <len>\0"` + contents).
    pub blob_sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let data = std::fs::read(path)?;
        Ok(FileRecord { path: path.to_path_buf(), bytes: data.len() as u64, blob_sha256: blob_hash(&data) })
    }
}

pub fn blob_hash(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", data.len()).as_bytes());
    h.update(data);
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_millis: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_millis: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn timing(&mut self, name: &str, millis: f64) {
        self.timings_millis.insert(name.to_string(), millis);
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_format() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
