//! Report bundle: one directory per run plus a manifest describing it.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub roster: Vec<String>,
    pub samples: usize,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, config_hash: String) -> Self {
        Manifest {
            tool: "mutcon",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            config_hash,
            config: serde_json::to_value(config).expect("configuration serializes"),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            roster: Vec::new(),
            samples: 0,
            files: Vec::new(),
        }
    }
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(InputDigest { path: path.display().to_string(), sha256: format!("{:x}", Sha256::digest(bytes)) })
}

/// Output directory that remembers which files it wrote.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Bundle { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        let mut out = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
        f(&mut out)?;
        out.flush().map_err(CliError::io(&path))?;
        self.files.push(name.to_owned());
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        self.write_with(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)
                .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
            out.write_all(b"\n").map_err(CliError::io(&path))
        })
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        self.files.sort();
        manifest.files = std::mem::take(&mut self.files);
        self.write_json("manifest.json", &manifest)?;
        Ok(self.dir)
    }
}
