//! Artifact writing. Every file gets a `<name>.manifest.json` beside it
//! holding the command, resolved config, seed, and the digests of the
//! artifact and its inputs. Nothing time-dependent is recorded, so reruns
//! are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRef {
    pub name: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'a str,
    command: &'a str,
    seed: u64,
    sha256: String,
    inputs: &'a [InputRef],
    config: &'a ExperimentConfig,
}

/// Writes artifacts for one command into the output directory.
pub struct ArtifactWriter<'a> {
    dir: PathBuf,
    command: &'static str,
    config: &'a ExperimentConfig,
    inputs: Vec<InputRef>,
}

impl<'a> ArtifactWriter<'a> {
    pub fn new(command: &'static str, config: &'a ExperimentConfig) -> Result<Self, CliError> {
        let dir = config.output_dir.clone();
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        Ok(ArtifactWriter {
            dir,
            command,
            config,
            inputs: Vec::new(),
        })
    }

    /// Records an input file by name and digest.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let sha256 = file_digest(path)?;
        self.inputs.push(InputRef { name, sha256 });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let manifest = Manifest {
            artifact: name,
            command: self.command,
            seed: self.config.seed,
            sha256: sha256_hex(bytes),
            inputs: &self.inputs,
            config: self.config,
        };
        let mpath = self.path(&format!("{name}.manifest.json"));
        let mut raw = serde_json::to_vec_pretty(&manifest).map_err(dftbench_core::Error::from)?;
        raw.push(b'\n');
        fs::write(&mpath, raw).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", mpath.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut raw = serde_json::to_vec_pretty(value).map_err(dftbench_core::Error::from)?;
        raw.push(b'\n');
        self.bytes(name, &raw)
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf, CliError> {
        let mut raw = Vec::new();
        for r in records {
            serde_json::to_writer(&mut raw, r).map_err(dftbench_core::Error::from)?;
            raw.push(b'\n');
        }
        self.bytes(name, &raw)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        self.bytes(name, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn manifest_sits_beside_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            output_dir: dir.path().to_path_buf(),
            seed: 3,
            ..ExperimentConfig::default()
        };
        let w = ArtifactWriter::new("test", &cfg).unwrap();
        w.json("x.json", &serde_json::json!({"a": 1})).unwrap();
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("x.json.manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"], 3);
        assert_eq!(m["command"], "test");
        assert_eq!(m["config"]["seed"], 3);
        assert_eq!(m["sha256"], sha256_hex(&fs::read(dir.path().join("x.json")).unwrap()));
    }
}
