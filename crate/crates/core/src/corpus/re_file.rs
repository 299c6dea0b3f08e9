//! Relation-extraction files.
//!
//! Canonical form is `sentence<TAB>label`, one example per line. Seed pools
//! may also use the `| sentence | label |` row shape; the label is always
//! the last `|`-delimited field so a `|` inside the sentence is harmless.

use serde::{Deserialize, Serialize};

use super::conll::decode_utf8;
use super::{CorpusError, Dataset, Label, ReExample, Source, DISEASE_MARKER, GENE_MARKER};

/// Entity placeholders every sentence of a dataset must carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReSchema {
    pub placeholders: Vec<String>,
}

impl Default for ReSchema {
    /// The GAD / EU-ADR gene-disease schema.
    fn default() -> Self {
        ReSchema {
            placeholders: vec![GENE_MARKER.to_string(), DISEASE_MARKER.to_string()],
        }
    }
}

impl ReSchema {
    pub fn missing<'a>(&'a self, sentence: &str) -> Option<&'a str> {
        self.placeholders
            .iter()
            .find(|p| !sentence.contains(p.as_str()))
            .map(String::as_str)
    }

    /// Placeholders that do not occur exactly once.
    pub fn miscounted<'a>(&'a self, sentence: &str) -> Vec<(&'a str, usize)> {
        self.placeholders
            .iter()
            .map(|p| (p.as_str(), sentence.matches(p.as_str()).count()))
            .filter(|&(_, n)| n != 1)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReRowFormat {
    Tsv,
    Pipe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowError {
    NoDelimiter,
    MissingLabel,
    BadLabel,
}

/// Split one row into sentence and raw label text.
pub(crate) fn split_row(line: &str) -> Result<(&str, &str, ReRowFormat), RowError> {
    let trimmed = line.trim();
    if let Some((sentence, label)) = trimmed.rsplit_once('\t') {
        return Ok((sentence.trim(), label.trim(), ReRowFormat::Tsv));
    }
    if let Some(inner) = trimmed.strip_prefix('|') {
        let inner = inner.strip_suffix('|').unwrap_or(inner);
        return match inner.rsplit_once('|') {
            Some((sentence, label)) => Ok((sentence.trim(), label.trim(), ReRowFormat::Pipe)),
            None => Err(RowError::MissingLabel),
        };
    }
    Err(RowError::NoDelimiter)
}

pub(crate) fn parse_row(line: &str) -> Result<(String, Label, ReRowFormat), RowError> {
    let (sentence, label, format) = split_row(line)?;
    if label.is_empty() {
        return Err(RowError::MissingLabel);
    }
    let label = Label::parse_lenient(label).ok_or(RowError::BadLabel)?;
    Ok((sentence.to_string(), label, format))
}

/// Parse every non-blank line, keeping the row format of each.
pub fn parse_re_rows(bytes: &[u8], schema: &ReSchema) -> Result<Vec<(ReExample, ReRowFormat)>, CorpusError> {
    let text = decode_utf8(bytes)?;
    let mut rows = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (sentence, label_text, format) = split_row(line).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            column: 1,
            reason: match e {
                RowError::MissingLabel => "row has no label field".to_string(),
                _ => "expected `sentence<TAB>label` or `| sentence | label |`".to_string(),
            },
        })?;
        let label = Label::parse_lenient(label_text).ok_or_else(|| CorpusError::BadLabel {
            line: line_no,
            label: label_text.to_string(),
        })?;
        if let Some(p) = schema.missing(sentence) {
            return Err(CorpusError::MissingPlaceholder {
                line: line_no,
                placeholder: p.to_string(),
            });
        }
        rows.push((ReExample::new(sentence, label, Source::Original), format));
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(rows)
}

/// Parse an RE file under the gene-disease schema.
pub fn parse_re_file(bytes: &[u8]) -> Result<Dataset, CorpusError> {
    let rows = parse_re_rows(bytes, &ReSchema::default())?;
    Ok(Dataset::re(rows.into_iter().map(|(e, _)| e).collect()))
}

pub fn write_re_tsv(examples: &[ReExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&e.sentence);
        out.push('\t');
        out.push_str(&e.label.to_string());
        out.push('\n');
    }
    out
}
