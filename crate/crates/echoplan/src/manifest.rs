//! Per-output-directory run manifests.
//!
//! Each command writes `manifest.json` into its output directory listing every
//! file it produced with a content hash. Re-running a command with the same
//! inputs and arguments finds a matching manifest whose outputs are intact
//! and leaves the directory untouched.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::blob_hash;
use crate::error::{FormatError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_hash: Option<String>,
    /// Content hash of every input dataset or checkpoint, in argument order.
    pub input_hashes: Vec<String>,
    pub outputs: Vec<OutputEntry>,
    pub wall_time_s: f64,
}

impl RunManifest {
    /// Whether this manifest records the same invocation.
    pub fn same_invocation(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.args == other.args
            && self.config_hash == other.config_hash
            && self.input_hashes == other.input_hashes
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    Ok(blob_hash(&bytes))
}

pub fn output_entries(dir: &Path, files: &[PathBuf]) -> Result<Vec<OutputEntry>> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f).to_string_lossy().replace('\\', "/");
        out.push(OutputEntry {
            path: rel,
            hash: file_hash(f)?,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    crate::report::read_json(&dir.join(MANIFEST_FILE))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    crate::report::write_json(&path, manifest)?;
    Ok(path)
}

/// True when `dir` already holds the outputs of this exact invocation, all
/// unmodified.
pub fn is_up_to_date(dir: &Path, pending: &RunManifest) -> bool {
    let Ok(existing) = read_manifest(dir) else {
        return false;
    };
    existing.same_invocation(pending)
        && !existing.outputs.is_empty()
        && existing
            .outputs
            .iter()
            .all(|o| file_hash(&dir.join(&o.path)).is_ok_and(|h| h == o.hash))
}
