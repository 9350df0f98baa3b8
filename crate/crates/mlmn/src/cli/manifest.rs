//! Run manifests: enough provenance next to every output to replay it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Fully resolved configuration after file and flag merging.
    pub config: serde_json::Value,
    /// Input path -> SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::input(format!("cannot hash {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        config: serde_json::Value,
        started_unix: u64,
    ) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix,
            finished_unix: 0,
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `<command>-manifest.json` into `dir` via write-then-rename.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.finished_unix = unix_now();
        let path = dir.join(format!("{}-manifest.json", self.command));
        let tmp = path.with_extension("json.tmp");
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::input(format!("manifest serialization: {e}")))?;
        std::fs::write(&tmp, json)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.txt");
        std::fs::write(&f, "hello").unwrap();
        let a = sha256_file(&f).unwrap();
        let b = sha256_file(&f).unwrap();
        assert_eq!(a, b);
        std::fs::write(&f, "hello!").unwrap();
        assert_ne!(a, sha256_file(&f).unwrap());
    }

    #[test]
    fn manifest_lands_next_to_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, "data").unwrap();
        let mut m = RunManifest::new("demo", 7, serde_json::json!({"k": 1}), unix_now());
        m.record_input(&input).unwrap();
        m.record_output(&dir.path().join("out.csv"));
        let path = m.write(dir.path()).unwrap();
        assert!(path.ends_with("demo-manifest.json"));
        let back: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.inputs.len(), 1);
    }

    #[test]
    fn missing_input_is_an_input_error() {
        let mut m = RunManifest::new("demo", 0, serde_json::Value::Null, 0);
        let err = m.record_input(Path::new("/nonexistent/file")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
