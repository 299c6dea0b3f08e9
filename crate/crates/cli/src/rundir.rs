//! Run directories and their manifests.
//!
//! A one-shot command gets a fresh `<cmd>-<confighash>-<seq>` directory;
//! `seq` counts up and existing directories are never reused. Resumable
//! sessions (`forge`, `review`) live in `<cmd>-<confighash>` and rewrite
//! their manifest on every update. Either kind holds `run.lock` while a
//! process works in it.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

const LOCK_FILE: &str = "run.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Git-style object digest: SHA-256 over `blob <len>\0` plus the bytes.
pub fn blob_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(blob_digest(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub config: String,
    pub started_unix: u64,
    pub status: String,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the run directory.
    pub outputs: Vec<FileRecord>,
}

pub struct RunDir {
    path: PathBuf,
    manifest: RunManifest,
}

fn create_lock(dir: &Path) -> Result<(), CliError> {
    let lock = dir.join(LOCK_FILE);
    match OpenOptions::new().write(true).create_new(true).open(&lock) {
        Ok(mut f) => {
            let _ = writeln!(f, "{}", std::process::id());
            Ok(())
        }
        Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::new(
            "Locked",
            format!(
                "{} is in use (remove {} if no process owns it)",
                dir.display(),
                lock.display()
            ),
        )),
        Err(e) => Err(CliError::io(&lock, e)),
    }
}

impl RunDir {
    fn manifest(command: &str, config_hash: &str, config: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            config: config.to_string(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            status: "running".into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Creates the next unused `<command>-<hash>-<seq>` directory.
    pub fn create(root: &Path, command: &str, config_hash: &str, config: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        for seq in 1.. {
            let path = root.join(format!("{command}-{config_hash}-{seq:03}"));
            match fs::create_dir(&path) {
                Ok(()) => {
                    create_lock(&path)?;
                    return Ok(RunDir {
                        path,
                        manifest: Self::manifest(command, config_hash, config),
                    });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::io(&path, e)),
            }
        }
        unreachable!("sequence numbers are unbounded")
    }

    /// Opens (creating if needed) the resumable `<command>-<hash>` directory.
    pub fn session(root: &Path, command: &str, config_hash: &str, config: &str) -> Result<Self, CliError> {
        let path = root.join(format!("{command}-{config_hash}"));
        fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        create_lock(&path)?;
        let manifest = match fs::read_to_string(path.join(MANIFEST_FILE)) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| CliError::new("ParseError", format!("{}: {e}", path.join(MANIFEST_FILE).display())))?,
            Err(_) => Self::manifest(command, config_hash, config),
        };
        Ok(RunDir { path, manifest })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let record = FileRecord {
            path: path.display().to_string(),
            digest: file_digest(path)?,
        };
        self.manifest.inputs.retain(|r| r.path != record.path);
        self.manifest.inputs.push(record);
        Ok(())
    }

    /// Writes `name` inside the run directory and records its digest.
    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.join(name);
        fs::write(&path, contents.as_ref()).map_err(|e| CliError::io(&path, e))?;
        self.record_output(name)?;
        Ok(path)
    }

    /// Records (or refreshes) the digest of a file already in the directory.
    pub fn record_output(&mut self, name: &str) -> Result<(), CliError> {
        let record = FileRecord {
            path: name.to_string(),
            digest: file_digest(&self.join(name))?,
        };
        self.manifest.outputs.retain(|r| r.path != name);
        self.manifest.outputs.push(record);
        Ok(())
    }

    pub fn save_manifest(&self, status: &str) -> Result<(), CliError> {
        let mut m = self.manifest.clone();
        m.status = status.to_string();
        let path = self.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        let tmp = self.join(".manifest.json.tmp");
        fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    }

    pub fn finish(self, status: &str) -> Result<PathBuf, CliError> {
        self.save_manifest(status)?;
        Ok(self.path.clone())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.path.join(LOCK_FILE));
    }
}

/// Newest `<command>-*-<seq>` run directory under `root` holding `file`.
pub fn latest_run_with(root: &Path, command: &str, file: &str) -> Option<PathBuf> {
    let mut dirs: Vec<(SystemTime, PathBuf)> = fs::read_dir(root)
        .ok()?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&format!("{command}-")))
                && p.join(file).is_file()
        })
        .filter_map(|p| Some((fs::metadata(p.join(MANIFEST_FILE)).ok()?.modified().ok()?, p)))
        .collect();
    dirs.sort();
    dirs.pop().map(|(_, p)| p)
}
