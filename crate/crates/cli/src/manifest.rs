use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use minvol_nmf::solver::SolverConfig;
use minvol_nmf::stft::WindowSpec;

use crate::args::Command;
use crate::error::CliError;

const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command run: enough to re-run it and check its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub solver: Option<SolverConfig>,
    pub window: Option<WindowSpec>,
    /// SHA-256 of every input file, keyed by absolute path.
    pub input_hashes: BTreeMap<String, String>,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
    /// Wall time in seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            solver: None,
            window: None,
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            version: minvol_nmf::VERSION.to_string(),
        }
    }

    /// Hashes `path` and returns its absolute form.
    pub fn add_input(&mut self, path: &Path) -> Result<PathBuf, CliError> {
        let abs = fs::canonicalize(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        self.input_hashes.insert(abs.display().to_string(), hash_file(&abs)?);
        Ok(abs)
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
