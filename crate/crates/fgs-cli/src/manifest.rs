//! Run manifests: a config snapshot plus content hashes of inputs and
//! outputs, so a finished run records exactly what it read and wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Hex-encoded SHA-256 of a byte slice, prefixed with the algorithm.
pub fn bytes_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(7 + 64);
    out.push_str("sha256:");
    for b in digest {
        use std::fmt::Write;
        write!(out, "{b:02x}").expect("writing to a string cannot fail");
    }
    out
}

/// Content hash of a file.
pub fn file_digest<P: AsRef<Path>>(path: P) -> Result<String, CliError> {
    Ok(bytes_digest(&fs::read(path)?))
}

/// What one command run read, wrote and was configured with. Holds no
/// timestamps, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Flat key=value config snapshot.
    pub config: BTreeMap<String, String>,
    /// Input path -> content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output path -> content hash.
    pub outputs: BTreeMap<String, String>,
    /// Command-specific result summary.
    pub result: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            result: serde_json::Value::Null,
        }
    }

    /// Records an input file under its display path.
    pub fn add_input<P: AsRef<Path>>(&mut self, path: P) -> Result<(), CliError> {
        let digest = file_digest(&path)?;
        self.inputs.insert(path.as_ref().display().to_string(), digest);
        Ok(())
    }

    /// Records an output file under its display path.
    pub fn add_output<P: AsRef<Path>>(&mut self, path: P) -> Result<(), CliError> {
        let digest = file_digest(&path)?;
        self.outputs.insert(path.as_ref().display().to_string(), digest);
        Ok(())
    }

    /// Writes the manifest as pretty-printed JSON.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("manifest serialization: {e}")))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        // SHA-256 of the empty input, then of "abc".
        assert_eq!(
            bytes_digest(b""),
            "sha256:e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            bytes_digest(b"abc"),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_roundtrips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, b"abc").unwrap();

        let mut manifest = Manifest::new("train", 42);
        manifest.config.insert("steps".into(), "100".into());
        manifest.add_input(&input).unwrap();
        manifest.result = serde_json::json!({"final_loss": 0.25});
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();

        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed["command"], "train");
        assert_eq!(parsed["seed"], 42);
        assert_eq!(parsed["config"]["steps"], "100");
        let hash = parsed["inputs"][input.display().to_string()].as_str().unwrap();
        assert!(hash.starts_with("sha256:ba7816bf"));
        assert_eq!(parsed["result"]["final_loss"], 0.25);
    }
}
