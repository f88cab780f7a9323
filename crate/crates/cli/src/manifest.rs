//! Atomic artifact writing and the per-run provenance manifest.
//!
//! Every command writes its outputs through [`OutputWriter`]: bytes land in
//! a temporary file first and are renamed into place, and the manifest
//! records content digests for inputs and outputs so a report is
//! re-derivable from (input digests, config, seed) alone. Manifests carry
//! no timestamps or absolute paths; identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use tabshift::util::sha256_hex;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub metadata: serde_json::Value,
}

pub struct OutputWriter {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-partial");
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("writing `{}`", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into `{}`", path.display()))?;
    Ok(())
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir `{}`", dir.display()))?;
        Ok(OutputWriter { dir: dir.to_path_buf(), outputs: BTreeMap::new(), inputs: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Record an input file by basename and content digest.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading input `{}`", path.display()))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        self.inputs.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    /// Atomically write one artifact and record its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        atomic_write(&path, bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write the manifest and finish the run.
    pub fn finish(
        self,
        command: &str,
        config_digest: &str,
        metadata: serde_json::Value,
    ) -> Result<()> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest.to_string(),
            inputs: self.inputs,
            outputs: self.outputs,
            metadata,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        atomic_write(&self.dir.join("manifest.json"), text.as_bytes())
    }
}

/// Re-hash the outputs listed in a run's manifest and compare digests.
pub fn verify_run_dir(dir: &Path) -> Result<Vec<String>> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading `{}`", manifest_path.display()))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let mut mismatches = Vec::new();
    if let Some(outputs) = manifest.get("outputs").and_then(|o| o.as_object()) {
        for (name, digest) in outputs {
            let bytes = std::fs::read(dir.join(name))
                .with_context(|| format!("output `{name}` missing in `{}`", dir.display()))?;
            if sha256_hex(&bytes) != digest.as_str().unwrap_or_default() {
                mismatches.push(name.clone());
            }
        }
    }
    Ok(mismatches)
}
