use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::InputArgs;
use crate::CliError;

#[derive(Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        Ok(Self {
            path: path.to_path_buf(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// Everything needed to reproduce a run, plus per-phase wall-clock timings.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest<C> {
    pub command: String,
    pub version: String,
    pub input: InputArgs,
    pub config: C,
    pub inputs: Vec<InputDigest>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl<C> RunManifest<C> {
    pub fn new(command: &str, input: &InputArgs, config: C) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            input: input.clone(),
            config,
            inputs: Vec::new(),
            outputs: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    /// Swaps in a config that was only settled after some phases ran.
    pub fn with_config<D>(self, config: D) -> RunManifest<D> {
        RunManifest {
            command: self.command,
            version: self.version,
            input: self.input,
            config,
            inputs: self.inputs,
            outputs: self.outputs,
            timings_ms: self.timings_ms,
        }
    }

    /// Runs `f` and records its duration under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(phase.into(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    /// Records input digests and output paths, then writes the manifest.
    pub fn finish(mut self, out: &Path, manifest_path: &Path) -> Result<(), CliError>
    where
        C: Serialize,
    {
        self.inputs = self.input.digests()?;
        self.outputs.insert("result".into(), out.to_path_buf());
        self.outputs.insert("manifest".into(), manifest_path.to_path_buf());
        write_json(manifest_path, &self)
    }
}

/// Sidecar path for a run manifest: `result.json` -> `result.manifest.json`.
pub fn default_manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "result".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string(value)
        .map_err(|e| CliError::io(format!("cannot encode JSON: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}
