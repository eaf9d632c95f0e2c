//! Artifact plumbing shared by every subcommand: content hashing,
//! atomic writes, and the run manifest.
//!
//! Outputs land in the out-directory via a temp-file-plus-rename, so a
//! crashed run never leaves a half-written artifact behind. The
//! manifest records the content hash of every input and output next to
//! the seed and tool version — and nothing else, so rerunning a command
//! with identical inputs reproduces the manifest byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use miscast::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Write via a sibling temp file and rename, creating parents first.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid(format!("unusable output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{file_name}.partial"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    name: String,
    sha256: String,
}

/// What a command consumed and produced, written as
/// `<command>.manifest.json` beside the outputs.
#[derive(Debug, Clone, Serialize)]
struct Manifest {
    tool_version: &'static str,
    command: String,
    seed: u64,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
}

/// Collects a command's artifacts as they are read and written.
pub struct ArtifactSet {
    out_dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactSet {
    pub fn new(out_dir: &Path, command: &str, seed: u64) -> ArtifactSet {
        ArtifactSet {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                tool_version: env!("CARGO_PKG_VERSION"),
                command: command.to_string(),
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    /// Hash an input file into the manifest; call once per file read.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.inputs.push(ManifestEntry {
            name: basename(path),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Write one output atomically into the out-directory and record
    /// its hash. Returns the full path.
    pub fn write_output(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.manifest.outputs.push(ManifestEntry {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// Write the manifest itself; the final act of every command.
    pub fn finish(self) -> Result<()> {
        let name = format!("{}.manifest.json", self.manifest.command);
        let mut text =
            serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.out_dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn basename(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
