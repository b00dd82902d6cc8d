//! File access for one subcommand run: hashed reads, atomic writes and the
//! manifest record.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

fn hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    /// Effective settings after flags, config file and defaults.
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

#[derive(Debug, Default)]
pub struct Session {
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub config: BTreeMap<String, String>,
}

impl Session {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, &e))?;
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: hash(&bytes),
        });
        String::from_utf8(bytes).map_err(|e| {
            CliError::new(crate::error::ErrorKind::Input, format!("not UTF-8: {e}")).in_file(path)
        })
    }

    /// Writes through a temporary file in the target directory, then renames.
    pub fn write(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        write_atomic(path, contents.as_bytes())?;
        self.outputs.push(FileHash {
            path: path.display().to_string(),
            sha256: hash(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    /// Appends the run to `manifest` as one JSON line.
    pub fn append_manifest(self, manifest: &Path, command: &str, args: Vec<String>) -> Result<(), CliError> {
        let entry = ManifestEntry {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            args,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
        };
        let line = serde_json::to_string(&entry).expect("manifest entries serialize");
        ensure_parent(manifest)?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(manifest)
            .map_err(|e| CliError::io(manifest, &e))?;
        writeln!(f, "{line}").map_err(|e| CliError::io(manifest, &e))
    }
}

fn ensure_parent(path: &Path) -> Result<PathBuf, CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, &e))?;
    Ok(dir)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = ensure_parent(path)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, &e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, &e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, &e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a/b.txt");
        let mut s = Session::default();
        s.write(&out, "hello").unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "hello");
        assert_eq!(
            s.outputs[0].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        s.record("seed", 7);
        let manifest = dir.path().join("manifest.jsonl");
        s.append_manifest(&manifest, "simulate", vec!["--seed".into(), "7".into()]).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        assert_eq!(text.lines().count(), 1);
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["config"]["seed"], "7");
        assert_eq!(v["command"], "simulate");
    }

    #[test]
    fn missing_input_names_file() {
        let err = Session::default().read(Path::new("/nonexistent/x.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(err.file.as_deref(), Some(Path::new("/nonexistent/x.csv")));
    }
}
