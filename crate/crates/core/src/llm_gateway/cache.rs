use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    content: String,
}

/// Content-addressed response store: `<dir>/<key[..2]>/<key>.json`.
/// Nothing is ever evicted automatically.
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(ResponseCache {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock map poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    /// A record whose stored key disagrees with the file name is ignored.
    pub fn get(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        let record: CacheRecord = serde_json::from_str(&text).ok()?;
        (record.key == key).then_some(record.content)
    }

    pub fn put(&self, key: &str, content: &str) -> Result<(), GatewayError> {
        let lock = self.lock_for(key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        let path = self.path(key);
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        fs::create_dir_all(path.parent().expect("cache path has a parent")).map_err(err)?;
        let record = CacheRecord {
            key: key.to_string(),
            content: content.to_string(),
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&record).expect("record serializes")).map_err(err)?;
        fs::rename(&tmp, &path).map_err(err)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
