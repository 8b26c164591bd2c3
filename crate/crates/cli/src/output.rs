//! Output files and the manifest that records their hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Entry {
    pub sha256: String,
    pub bytes: u64,
    pub command: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// File name (relative to the output directory) → hash.
    pub files: BTreeMap<String, Entry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Files produced by one command, written together once all computation
/// has succeeded.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    text: Vec<(String, Vec<u8>)>,
    /// Files written by library code directly (chains); hashed afterwards.
    external: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str) -> Self {
        Outputs { dir: dir.to_path_buf(), command: command.into(), text: Vec::new(), external: Vec::new() }
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.text.push((name.into(), contents.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.add(name, s);
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Register a file the caller writes itself.
    pub fn external(&mut self, name: &str) {
        self.external.push(name.into());
    }

    pub fn prepare_dir(&self) -> anyhow::Result<()> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))
    }

    /// Write pending files and update the manifest.
    pub fn finish(self) -> anyhow::Result<()> {
        self.prepare_dir()?;
        let manifest_path = self.dir.join(MANIFEST);
        let mut manifest: Manifest = match fs::read_to_string(&manifest_path) {
            Ok(s) => serde_json::from_str(&s).unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        manifest.tool = "tsvar".into();
        manifest.version = env!("CARGO_PKG_VERSION").into();
        for (name, bytes) in &self.text {
            let path = self.dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            manifest.files.insert(
                name.clone(),
                Entry { sha256: sha256_hex(bytes), bytes: bytes.len() as u64, command: self.command.clone() },
            );
        }
        for name in &self.external {
            let path = self.dir.join(name);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            manifest.files.insert(
                name.clone(),
                Entry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, command: self.command.clone() },
            );
        }
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        fs::write(&manifest_path, json).with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(())
    }
}
