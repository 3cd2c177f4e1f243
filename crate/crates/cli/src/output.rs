//! Staged outputs and run manifests.
//!
//! Commands compute everything in memory first and only then commit, each
//! file through a temporary sibling that is renamed into place, so a failing
//! command leaves no new or half-written outputs behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Output files of one command, held until [`Staged::commit`].
pub struct Staged {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Staged {
    pub fn new(dir: &Path) -> Self {
        Staged {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Stages the bytes written by `f`.
    pub fn add_with<F, E>(&mut self, name: impl Into<String>, f: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), E>,
        E: std::error::Error + Send + Sync + 'static,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    /// Writes every staged file plus `manifest_<command>.json`, and returns
    /// the manifest.
    pub fn commit(mut self, mut manifest: Manifest) -> anyhow::Result<Manifest> {
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        manifest.outputs = self
            .files
            .iter()
            .map(|(name, bytes)| FileDigest {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect();
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        let name = format!("manifest_{}.json", manifest.command);
        self.files.push((name, json));
        for (name, bytes) in &self.files {
            write_atomic(&self.dir.join(name), bytes)?;
        }
        Ok(manifest)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest {
            command: "test".into(),
            version: "0",
            seed: Some(1),
            config: Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    #[test]
    fn commit_writes_files_and_digests() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Staged::new(dir.path());
        s.add("a.txt", b"abc".to_vec());
        let m = s.commit(manifest()).unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"abc");
        assert_eq!(
            m.outputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(dir.path().join("manifest_test.json").exists());
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.starts_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }

    #[test]
    fn failed_staging_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Staged::new(dir.path());
        s.add("a.txt", b"abc".to_vec());
        let r = s.add_with("b.txt", |_| Err(std::io::Error::other("boom")));
        assert!(r.is_err());
        drop(s);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
