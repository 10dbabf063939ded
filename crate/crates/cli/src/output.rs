//! Output directories are assembled in a hidden sibling and renamed into
//! place only once everything has been written, so a failed command never
//! leaves partial results behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub manifest_schema: u32,
    pub tool: String,
    pub command: String,
    pub arguments: Vec<String>,
    /// Resolved configuration (overrides applied), when the command has one.
    pub config: Option<String>,
    pub sweep: Option<SweepRecord>,
    pub seeds: Vec<u64>,
    pub timing: Option<Timing>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub key: String,
    pub values: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            manifest_schema: MANIFEST_SCHEMA_VERSION,
            tool: format!("d2dsched {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            config: None,
            sweep: None,
            seeds: Vec::new(),
            timing: None,
            artifacts: Vec::new(),
        }
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A directory being filled; removed on drop unless committed.
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    force: bool,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    pub fn create(target: &Path, force: bool) -> Result<Self, Failure> {
        if target.exists() && !force {
            let empty_dir = target.is_dir()
                && fs::read_dir(target).map(|mut d| d.next().is_none()).unwrap_or(false);
            if !empty_dir {
                return Err(Failure::invalid(format!(
                    "output {} already exists (use --force to replace it)",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| Failure::invalid(format!("{} is not a usable output path", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            force,
            files: Vec::new(),
            committed: false,
        })
    }

    /// Writes `bytes` to the relative path `rel` (forward slashes).
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), Failure> {
        if self.files.iter().any(|f| f == rel) {
            return Err(Failure::runtime(format!("output file {rel} written twice")));
        }
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    /// Lists every written file in the manifest, writes it and moves the
    /// directory into place.
    pub fn commit(mut self, mut manifest: Manifest) -> Result<(), Failure> {
        let mut files = self.files.clone();
        files.sort();
        manifest.artifacts = files
            .iter()
            .map(|rel| {
                let bytes = fs::read(self.dir.join(rel))?;
                Ok(Artifact {
                    path: rel.clone(),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_, std::io::Error>>()?;
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::runtime(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST_FILE), format!("{json}\n"))?;
        if self.target.exists() {
            if self.target.is_dir() {
                fs::remove_dir_all(&self.target)?;
            } else if self.force {
                fs::remove_file(&self.target)?;
            }
        }
        fs::rename(&self.dir, &self.target)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// File-name-safe form of a label or value.
pub fn safe_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-=".contains(c) { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with('.') {
        format!("_{cleaned}")
    } else {
        cleaned
    }
}
