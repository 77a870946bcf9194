//! Output directory handling: atomic artifact writes and the run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use rvr_core::{Error, Result};

use crate::config::{config_hash, sha256_hex};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Everything needed to repeat a run: the full configuration document,
/// the inputs it read (with digests), its seeds and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub seeds: BTreeMap<String, Value>,
    pub inputs: Vec<InputRecord>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Manifest {
            tool: "rvr",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config_hash: config_hash(&config),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            details: Value::Null,
        }
    }

    pub fn seed(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("seed values serialize");
        self.seeds.insert(name.into(), v);
        self
    }

    /// Reads an input file, recording its digest.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputRecord {
            role: role.into(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }
}

/// The one directory a run may write into.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `relative` through a temporary file in the same
    /// directory followed by a rename.
    pub fn write(&self, manifest: &mut Manifest, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let rel = Path::new(relative);
        if rel.is_absolute()
            || rel
                .components()
                .any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(Error::InvalidArgument(format!(
                "artifact path {relative:?} escapes the output directory"
            )));
        }
        let target = self.root.join(rel);
        let parent = target.parent().unwrap_or(&self.root);
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
        tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(&target)
            .map_err(|e| Error::io(&target, e.error))?;
        if relative != MANIFEST_FILE {
            manifest.artifacts.push(relative.to_string());
        }
        Ok(target)
    }

    pub fn write_json(
        &self,
        manifest: &mut Manifest,
        relative: &str,
        value: &impl Serialize,
    ) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(manifest, relative, text.as_bytes())
    }

    /// Writes an artifact produced by a streaming writer.
    pub fn write_with(
        &self,
        manifest: &mut Manifest,
        relative: &str,
        produce: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<PathBuf> {
        let mut buf = Vec::new();
        produce(&mut buf)?;
        self.write(manifest, relative, &buf)
    }

    pub fn finish(&self, mut manifest: Manifest) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        self.write(&mut manifest, MANIFEST_FILE, text.as_bytes())
    }
}
