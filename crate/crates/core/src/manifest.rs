//! Run manifests: every output file with its SHA-256 digest plus the key
//! scalar results of the run. The manifest is written last, so a run
//! directory without one is an incomplete run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config: String,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputFile>,
    pub scalars: BTreeMap<String, Value>,
    /// Resolution ran out or growth stopped early; outputs are truncated.
    pub partial: bool,
    /// `ok`, or `negative` for an expected negative result (e.g. no crossings).
    pub outcome: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs of one run and writes the manifest at the end.
#[derive(Debug)]
pub struct RunRecorder {
    dir: PathBuf,
    started: Instant,
    command_line: Vec<String>,
    config: String,
    outputs: Vec<OutputFile>,
    scalars: BTreeMap<String, Value>,
    partial: bool,
}

impl RunRecorder {
    pub fn new(dir: impl Into<PathBuf>, command_line: Vec<String>, config: String) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            started: Instant::now(),
            command_line,
            config,
            outputs: Vec::new(),
            scalars: BTreeMap::new(),
            partial: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` (relative to the run directory) and records its digest.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(path)
    }

    pub fn scalar(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.scalars.insert(key.to_string(), v);
    }

    pub fn scalars(&self) -> &BTreeMap<String, Value> {
        &self.scalars
    }

    pub fn mark_partial(&mut self) {
        self.partial = true;
    }

    /// Writes the manifest; call once, after every output.
    pub fn finish(mut self, negative: bool) -> Result<RunManifest> {
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command_line: self.command_line,
            config: self.config,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
            scalars: self.scalars,
            partial: self.partial,
            outcome: if negative { "negative" } else { "ok" }.to_string(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(self.dir.join(MANIFEST_FILE), json)?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

/// Recomputes every digest; returns the paths that are missing or differ.
pub fn verify_digests(dir: &Path) -> Result<Vec<String>> {
    let m = read_manifest(dir)?;
    let mut bad = Vec::new();
    for o in &m.outputs {
        match std::fs::read(dir.join(&o.path)) {
            Ok(bytes) if sha256_hex(&bytes) == o.sha256 => {}
            _ => bad.push(o.path.clone()),
        }
    }
    Ok(bad)
}
