use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Tracks every file a command writes so the run manifest can list it.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, String, u64)>,
}

#[derive(Debug, Serialize)]
struct Entry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: Option<u64>,
    files: Vec<Entry>,
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, data: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, data)?;
        self.files.retain(|(p, _, _)| p != path);
        self.files.push((path.to_path_buf(), sha256_hex(data), data.len() as u64));
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _, _)| p.as_path())
    }

    pub fn extend(&mut self, other: Artifacts) {
        for f in other.files {
            self.files.retain(|(p, _, _)| p != &f.0);
            self.files.push(f);
        }
    }

    /// Writes `manifest.json` in `dir`, paths relative to `dir` where
    /// possible, sorted.
    pub fn write_manifest(&mut self, dir: &Path, command: &str, seed: Option<u64>) -> Result<PathBuf> {
        let mut files: Vec<Entry> = self
            .files
            .iter()
            .map(|(p, h, n)| Entry {
                path: p.strip_prefix(dir).unwrap_or(p).display().to_string(),
                sha256: h.clone(),
                bytes: *n,
            })
            .collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let text = serde_json::to_string_pretty(&Manifest { command, seed, files })
            .expect("manifest serializes");
        let path = dir.join("manifest.json");
        fs::create_dir_all(dir)?;
        fs::write(&path, format!("{text}\n"))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
