//! Stage outputs and the run manifest.
//!
//! A stage renders every output in memory first. Files are then written to
//! temporaries in the output directory and renamed into place, so a failed
//! stage leaves nothing behind and a reader never sees a partial file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Stage};
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).map_err(runtime)?;
        text.push(b'\n');
        self.add(name, text);
        Ok(())
    }

    /// Renders with `f` into a buffer and adds it.
    pub fn add_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> climecon::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(runtime)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(runtime)?;
    tmp.as_file().sync_all().map_err(runtime)?;
    tmp.persist(&target).map_err(|e| runtime(format!("{}: {}", target.display(), e.error)))?;
    Ok(target)
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub stage: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: &'a RunConfig,
    pub inputs: BTreeMap<String, InputRecord>,
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch at stage start.
    pub started_at: u64,
    pub wall_time_seconds: f64,
}

/// Hashes of every declared input.
pub fn hash_inputs(config: &RunConfig) -> Result<BTreeMap<String, InputRecord>, CliError> {
    config
        .inputs
        .iter()
        .map(|(k, p)| Ok((k.clone(), InputRecord { path: p.clone(), sha256: sha256_file(p)? })))
        .collect()
}

/// Writes the outputs and then the manifest that lists them.
pub fn commit(
    stage: Stage,
    config: &RunConfig,
    threads: usize,
    inputs: BTreeMap<String, InputRecord>,
    outputs: &Outputs,
    started_at: u64,
    wall_time_seconds: f64,
) -> Result<(), CliError> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    for (name, bytes) in &outputs.files {
        write_atomic(dir, name, bytes)?;
    }
    let manifest = Manifest {
        stage: stage.name(),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        threads,
        config,
        inputs,
        outputs: outputs.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        started_at,
        wall_time_seconds,
    };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(runtime)?;
    text.push(b'\n');
    write_atomic(dir, MANIFEST, &text)?;
    Ok(())
}
