//! Run manifests and the output-directory guard used by every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written before any other output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    /// Input path (as given) to the SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn with_config(mut self, config: BTreeMap<String, String>) -> Self {
        self.config = config;
        self
    }

    /// Hashes `path` and records it. Missing files surface here, naming the
    /// path.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Hashes every file directly inside `dir`.
    pub fn add_input_dir(&mut self, dir: &Path) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            self.add_input(&p)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Output directory of one command. Files written through it are removed
/// again unless [`OutputDir::commit`] is called, so a failed command leaves
/// no partial results behind.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created: Vec<PathBuf>,
    created_root: bool,
    committed: bool,
}

impl OutputDir {
    /// Creates the directory if needed and writes the manifest into it.
    pub fn open(root: &Path, manifest: &RunManifest) -> Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut out = OutputDir {
            root: root.to_path_buf(),
            created: Vec::new(),
            created_root,
            committed: false,
        };
        out.write(MANIFEST_FILE, manifest.to_json())?;
        Ok(out)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Claims `name` for a file that some other routine will write.
    pub fn claim(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        if !self.created.contains(&p) {
            self.created.push(p.clone());
        }
        p
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.claim(name);
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.created {
            let _ = fs::remove_file(p);
        }
        if self.created_root {
            // Only succeeds when nothing else was put there.
            let _ = fs::remove_dir(&self.root);
        }
    }
}
