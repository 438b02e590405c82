//! Run manifests: every command leaves a JSON record of what it did —
//! command name, fully resolved configuration, master seed, tool version,
//! and a SHA-256 digest per output file. Digests are keyed by file name,
//! not path, so a rerun into a different directory still produces an
//! identical manifest when the outputs match.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    /// Command-specific resolved configuration, after file parsing and flag
    /// overrides; re-running from it reproduces the outputs byte for byte.
    pub config: serde_json::Value,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(OutputDigest {
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Write `<out>.manifest.json` next to the primary output (appending to
    /// the full file name, so differently-typed outputs sharing a stem keep
    /// distinct manifests) and return its path.
    pub fn write_beside(&self, primary_out: &Path) -> std::io::Result<std::path::PathBuf> {
        let name = primary_out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let path = primary_out.with_file_name(format!("{name}.manifest.json"));
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
