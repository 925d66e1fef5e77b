use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::schema_file::write_json;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a command read and wrote, with SHA-256 digests of every file.
/// Output names are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config_digest: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_clock_secs: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let digest = file_digest(path).map_err(|e| CliError::input(path, e))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        let path = dir.join(name);
        let digest = file_digest(&path).map_err(|e| CliError::output(&path, e))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    /// Stamps the elapsed time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> CliResult<Self> {
        if let Some(t) = self.started {
            self.wall_clock_secs = t.elapsed().as_secs_f64();
        }
        write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    Ok(digest_hex(&std::fs::read(path)?))
}
