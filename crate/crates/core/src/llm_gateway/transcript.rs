use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, ProviderKind};

/// One JSONL line of the transcript. `event` is `attempt` for every call
/// that reached a backend (successful or not) and `cache_hit` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub timestamp: String,
    pub event: String,
    pub digest: String,
    pub attempt: u32,
    pub provider: ProviderKind,
    pub request: ChatRequest,
    pub response: Option<String>,
    pub status: Option<u16>,
    pub error: Option<String>,
    pub latency_ms: u64,
}

impl TranscriptEntry {
    pub fn attempt(digest: &str, request: &ChatRequest, attempt: u32, provider: ProviderKind) -> Self {
        TranscriptEntry {
            timestamp: chrono::Utc::now().to_rfc3339(),
            event: "attempt".into(),
            digest: digest.to_string(),
            attempt,
            provider,
            request: request.clone(),
            response: None,
            status: None,
            error: None,
            latency_ms: 0,
        }
    }

    pub fn cache_hit(digest: &str, request: &ChatRequest, content: &str, provider: ProviderKind) -> Self {
        TranscriptEntry {
            event: "cache_hit".into(),
            response: Some(content.to_string()),
            ..TranscriptEntry::attempt(digest, request, 0, provider)
        }
    }

    pub fn succeeded(mut self, content: &str, status: Option<u16>, latency_ms: u64) -> Self {
        self.response = Some(content.to_string());
        self.status = status;
        self.latency_ms = latency_ms;
        self
    }

    pub fn failed(mut self, error: &str, status: Option<u16>, body: Option<&str>, latency_ms: u64) -> Self {
        self.error = Some(error.to_string());
        self.status = status;
        self.response = body.map(String::from);
        self.latency_ms = latency_ms;
        self
    }
}

/// Append-only JSONL log shared by all callers of a gateway.
pub struct Transcript {
    path: PathBuf,
    file: Mutex<File>,
}

impl Transcript {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        Ok(Transcript {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        let mut file = self.file.lock().expect("transcript lock poisoned");
        file.write_all(line.as_bytes())
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", self.path.display())))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
