//! Line-oriented `key: value` documents with optional `[section]` headers.
//!
//! Used for dataset manifests, run configs and trainer job files. Blank
//! lines and lines starting with `#` are ignored. Keys are case-sensitive;
//! a later duplicate of the same key in the same section replaces the
//! earlier one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected `key: value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: malformed section header {text:?}")]
    Section { line: usize, text: String },
    #[error("missing required key `{key}`{}", section_suffix(.section))]
    MissingKey { section: Option<String>, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue { line: usize, key: String, message: String },
}

fn section_suffix(section: &Option<String>) -> String {
    match section {
        Some(s) => format!(" in [{s}]"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub value: String,
    pub line: usize,
}

/// Parsed document. The unnamed top-level section is stored under `""`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDocument {
    sections: BTreeMap<String, BTreeMap<String, KvEntry>>,
}

impl KvDocument {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDocument::default();
        let mut current = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').map(str::trim).unwrap_or("");
                if name.is_empty() {
                    return Err(KvError::Section {
                        line: line_no,
                        text: raw.to_string(),
                    });
                }
                current = name.to_string();
                doc.sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once(':') else {
                return Err(KvError::Syntax {
                    line: line_no,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(KvError::Syntax {
                    line: line_no,
                    text: raw.to_string(),
                });
            }
            doc.sections.entry(current.clone()).or_default().insert(
                key.to_string(),
                KvEntry {
                    value: value.trim().to_string(),
                    line: line_no,
                },
            );
        }
        Ok(doc)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn entry(&self, section: &str, key: &str) -> Option<&KvEntry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, KvError> {
        self.get(section, key).ok_or_else(|| KvError::MissingKey {
            section: (!section.is_empty()).then(|| section.to_string()),
            key: key.to_string(),
        })
    }

    /// Parse a typed value, if present.
    pub fn parse_opt<T>(&self, section: &str, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(entry) => entry.value.parse::<T>().map(Some).map_err(|e| KvError::InvalidValue {
                line: entry.line,
                key: key.to_string(),
                message: e.to_string(),
            }),
        }
    }

    pub fn parse_or<T>(&self, section: &str, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parse_opt(section, key)?.unwrap_or(default))
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.to_string()).or_default().insert(
            key.to_string(),
            KvEntry {
                value: value.into(),
                line: 0,
            },
        );
    }

    /// Canonical rendering: sections and keys sorted, one `key: value` per
    /// line. Two documents with the same content render identically.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if entries.is_empty() {
                continue;
            }
            if !name.is_empty() {
                out.push_str(&format!("[{name}]\n"));
            }
            for (key, entry) in entries {
                out.push_str(&format!("{key}: {}\n", entry.value));
            }
        }
        out
    }
}
