//! Output directory bookkeeping and the run manifest.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Outcome of one named check. Checks that are not `enforced` compare
/// against reference values and never change the exit code.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub enforced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub status: String,
    pub checks: Vec<CheckOutcome>,
    /// Names of failed enforced checks.
    pub violations: Vec<String>,
    pub files: Vec<FileEntry>,
}

/// Writes files into the output directory and remembers their hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write `bytes` to `name` atomically and record it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.record_bytes(name, bytes);
        Ok(())
    }

    /// Record a file that was written by other means.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name)).with_context(|| format!("reading back {name}"))?;
        self.record_bytes(name, &bytes);
        Ok(())
    }

    fn record_bytes(&mut self, name: &str, bytes: &[u8]) {
        let entry = FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 };
        match self.files.iter_mut().find(|f| f.path == name) {
            Some(existing) => *existing = entry,
            None => self.files.push(entry),
        }
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(manifest)?;
        json.push(b'\n');
        write_atomic(&self.path(MANIFEST_NAME), &json)
    }
}

/// Write to a sibling temporary file, sync, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}
