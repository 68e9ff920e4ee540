//! Run manifests: enough to re-execute a command and check that its
//! outputs come out byte-identical.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Key under which the command's standard output is hashed.
pub const STDOUT_KEY: &str = "<stdout>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file and of standard output.
    pub outputs: BTreeMap<String, String>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects inputs, outputs and the effective configuration while a
/// command runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub stdout: Vec<u8>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
}

impl Recorder {
    pub fn read(&mut self, path: &Path) -> std::io::Result<Vec<u8>> {
        let bytes = std::fs::read(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> std::io::Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Hashes a file some library routine reads on its own.
    pub fn note_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.read(path).map(|_| ())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes)?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn print(&mut self, text: &str) {
        self.stdout.extend_from_slice(text.as_bytes());
    }

    pub fn finish(mut self, command: &str, args: &[String], exit_code: i32) -> (RunManifest, Vec<u8>) {
        self.outputs.insert(STDOUT_KEY.to_string(), sha256_hex(&self.stdout));
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: args.to_vec(),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            exit_code,
        };
        (manifest, self.stdout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashCheck {
    pub expected: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub command: String,
    pub inputs: BTreeMap<String, HashCheck>,
    pub outputs: BTreeMap<String, HashCheck>,
    pub exit_code: HashCheck,
    pub reproduced: bool,
}

pub fn compare(expected: &BTreeMap<String, String>, actual: &BTreeMap<String, String>) -> BTreeMap<String, HashCheck> {
    expected
        .iter()
        .map(|(k, e)| {
            let a = actual.get(k).cloned();
            let matches = a.as_deref() == Some(e.as_str());
            (k.clone(), HashCheck { expected: e.clone(), actual: a, matches })
        })
        .collect()
}
