//! NER and RE datasets: tokens, IOB tags, entity spans and relation examples.
//!
//! Everything here is immutable once constructed. Parsing lives in the
//! [`conll`] and [`re_file`] submodules; the IOB/span bijection in [`iob`].

pub mod conll;
pub mod iob;
pub mod manifest;
pub mod re_file;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conll::{parse_conll, parse_conll_sentences, write_conll};
pub use iob::{repair_iob, spans_from_tags, tags_from_spans, tags_from_spans_len, validate_iob, IobMode};
pub use manifest::DatasetManifest;
pub use re_file::{parse_re_file, parse_re_rows, write_re_tsv, ReRowFormat, ReSchema};
pub use tokenize::{detokenize, is_punctuation, tokenize};

use crate::ErrorClass;

pub const GENE_MARKER: &str = "@GENE$";
pub const DISEASE_MARKER: &str = "@DISEASE$";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}, column {column}: malformed line: {reason}")]
    MalformedLine { line: usize, column: usize, reason: String },
    #[error("line {line}, column {column}: unknown tag {tag:?}")]
    UnknownTag { line: usize, column: usize, tag: String },
    #[error("input contains no records")]
    EmptyInput,
    #[error("line {line}: input is not valid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("orphan inside tag at position {position}")]
    OrphanInsideTag { position: usize },
    #[error("spans [{}, {}] and [{}, {}] overlap", .first.0, .first.1, .second.0, .second.1)]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("span [{start}, {end}] out of range for sentence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("line {line}: sentence is missing placeholder {placeholder}")]
    MissingPlaceholder { line: usize, placeholder: String },
    #[error("line {line}: bad label {label:?} (expected Yes or No)")]
    BadLabel { line: usize, label: String },
    #[error("dataset {name} cannot hold {task} items")]
    TaskMismatch { name: DatasetName, task: Task },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ErrorClass for CorpusError {
    fn class(&self) -> &'static str {
        match self {
            CorpusError::MalformedLine { .. } => "MalformedLine",
            CorpusError::UnknownTag { .. } => "UnknownTag",
            CorpusError::EmptyInput => "EmptyInput",
            CorpusError::InvalidUtf8 { .. } => "InvalidUtf8",
            CorpusError::OrphanInsideTag { .. } => "OrphanInsideTag",
            CorpusError::OverlappingSpans { .. } => "OverlappingSpans",
            CorpusError::SpanOutOfRange { .. } => "SpanOutOfRange",
            CorpusError::LengthMismatch { .. } => "LengthMismatch",
            CorpusError::InvalidToken(_) => "InvalidToken",
            CorpusError::MissingPlaceholder { .. } => "MissingPlaceholder",
            CorpusError::BadLabel { .. } => "BadLabel",
            CorpusError::TaskMismatch { .. } => "TaskMismatch",
            CorpusError::Manifest(_) => "ManifestError",
            CorpusError::Io { .. } => "IoError",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagKind {
    O,
    B,
    I,
}

/// One IOB tag. The entity type is carried by `Begin`/`Inside` only, so
/// "O has no type" holds by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn begin(ty: impl Into<String>) -> Self {
        Tag::Begin(ty.into())
    }

    pub fn inside(ty: impl Into<String>) -> Self {
        Tag::Inside(ty.into())
    }

    pub fn kind(&self) -> TagKind {
        match self {
            Tag::Outside => TagKind::O,
            Tag::Begin(_) => TagKind::B,
            Tag::Inside(_) => TagKind::I,
        }
    }

    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::Outside)
    }

    /// Parse a space-separated tag string such as `"O B-Disease I-Disease"`.
    pub fn parse_sequence(s: &str) -> Result<Vec<Tag>, UnknownTagError> {
        s.split_whitespace().map(str::parse).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown tag {0:?}")]
pub struct UnknownTagError(pub String);

impl FromStr for Tag {
    type Err = UnknownTagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        let valid_type = |t: &str| !t.is_empty() && !t.contains(char::is_whitespace);
        match s.split_once('-') {
            Some(("B", ty)) if valid_type(ty) => Ok(Tag::Begin(ty.to_string())),
            Some(("I", ty)) if valid_type(ty) => Ok(Tag::Inside(ty.to_string())),
            _ => Err(UnknownTagError(s.to_string())),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Tag {
    type Error = UnknownTagError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Render tags the way the paper-style examples are written: `"O O B-X I-X"`.
pub fn format_tags(tags: &[Tag]) -> String {
    tags.iter().map(Tag::to_string).collect::<Vec<_>>().join(" ")
}

/// Tokens plus one tag per token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedSentence {
    tokens: Vec<Token>,
    tags: Vec<Tag>,
}

impl TaggedSentence {
    pub fn new<S: Into<String>>(words: impl IntoIterator<Item = S>, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        let tokens = words
            .into_iter()
            .enumerate()
            .map(|(index, w)| {
                let text = w.into();
                if text.is_empty() || text.contains(char::is_whitespace) {
                    Err(CorpusError::InvalidToken(text))
                } else {
                    Ok(Token { text, index })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_tokens(tokens, tags)
    }

    pub fn from_tokens(tokens: Vec<Token>, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        if tokens.len() != tags.len() {
            return Err(CorpusError::LengthMismatch {
                tokens: tokens.len(),
                tags: tags.len(),
            });
        }
        for (i, tok) in tokens.iter().enumerate() {
            if tok.index != i || tok.text.is_empty() || tok.text.contains(char::is_whitespace) {
                return Err(CorpusError::InvalidToken(tok.text.clone()));
            }
        }
        Ok(TaggedSentence { tokens, tags })
    }

    /// All-O sentence over the tokenization of `text`.
    pub fn untagged(text: &str) -> Self {
        let tokens = tokenize(text);
        let tags = vec![Tag::Outside; tokens.len()];
        TaggedSentence { tokens, tags }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        spans_from_tags(&self.tags)
    }

    pub fn with_tags(&self, tags: Vec<Tag>) -> Result<Self, CorpusError> {
        Self::from_tokens(self.tokens.clone(), tags)
    }
}

/// Inclusive token interval with an entity type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: impl Into<String>) -> Self {
        EntitySpan {
            start,
            end,
            entity_type: entity_type.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Yes,
    No,
}

impl Label {
    /// Lenient label normalization: surrounding whitespace and punctuation
    /// are stripped and case is ignored, so `" yes. "` is `Yes`.
    pub fn parse_lenient(s: &str) -> Option<Label> {
        let core = s.trim().trim_matches(|c: char| is_punctuation(c) || c.is_whitespace());
        if core.eq_ignore_ascii_case("yes") {
            Some(Label::Yes)
        } else if core.eq_ignore_ascii_case("no") {
            Some(Label::No)
        } else {
            None
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Yes => "Yes",
            Label::No => "No",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Synthetic,
}

/// A relation-extraction sentence with entity placeholders and a Yes/No label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReExample {
    pub sentence: String,
    pub label: Label,
    pub source: Source,
}

impl ReExample {
    pub fn new(sentence: impl Into<String>, label: Label, source: Source) -> Self {
        ReExample {
            sentence: sentence.into(),
            label,
            source,
        }
    }

    /// `|sentence|label|`, the row shape used for seed examples in prompts.
    pub fn seed_row(&self) -> String {
        format!("|{}|{}|", self.sentence, self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "NER")]
    Ner,
    #[serde(rename = "RE")]
    Re,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Ner => "NER",
            Task::Re => "RE",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NER" => Ok(Task::Ner),
            "RE" => Ok(Task::Re),
            other => Err(format!("unknown task {other:?} (expected NER or RE)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    NcbiDisease,
    Bc5cdrDisease,
    Bc5cdrChemical,
    Gad,
    Euadr,
    Custom,
}

impl DatasetName {
    /// The task a named benchmark belongs to; `Custom` may hold either.
    pub fn task(self) -> Option<Task> {
        match self {
            DatasetName::NcbiDisease | DatasetName::Bc5cdrDisease | DatasetName::Bc5cdrChemical => Some(Task::Ner),
            DatasetName::Gad | DatasetName::Euadr => Some(Task::Re),
            DatasetName::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::NcbiDisease => "ncbi-disease",
            DatasetName::Bc5cdrDisease => "bc5cdr-disease",
            DatasetName::Bc5cdrChemical => "bc5cdr-chemical",
            DatasetName::Gad => "gad",
            DatasetName::Euadr => "euadr",
            DatasetName::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ncbi-disease" => DatasetName::NcbiDisease,
            "bc5cdr-disease" => DatasetName::Bc5cdrDisease,
            "bc5cdr-chemical" => DatasetName::Bc5cdrChemical,
            "gad" => DatasetName::Gad,
            "euadr" | "eu-adr" => DatasetName::Euadr,
            "custom" => DatasetName::Custom,
            other => return Err(format!("unknown dataset name {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
    SeedPool,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::SeedPool => "seed-pool",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "seed-pool" | "seed_pool" => Ok(Split::SeedPool),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Items {
    Ner(Vec<TaggedSentence>),
    Re(Vec<ReExample>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    name: DatasetName,
    split: Split,
    items: Items,
}

impl Dataset {
    pub fn new(name: DatasetName, split: Split, items: Items) -> Result<Self, CorpusError> {
        let task = match &items {
            Items::Ner(_) => Task::Ner,
            Items::Re(_) => Task::Re,
        };
        if let Some(expected) = name.task() {
            if expected != task {
                return Err(CorpusError::TaskMismatch { name, task });
            }
        }
        Ok(Dataset { name, split, items })
    }

    pub fn ner(sentences: Vec<TaggedSentence>) -> Self {
        Dataset {
            name: DatasetName::Custom,
            split: Split::Train,
            items: Items::Ner(sentences),
        }
    }

    pub fn re(examples: Vec<ReExample>) -> Self {
        Dataset {
            name: DatasetName::Custom,
            split: Split::Train,
            items: Items::Re(examples),
        }
    }

    /// Re-tag with a benchmark name and split, checking the name/task pairing.
    pub fn relabel(self, name: DatasetName, split: Split) -> Result<Self, CorpusError> {
        Dataset::new(name, split, self.items)
    }

    pub fn name(&self) -> DatasetName {
        self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn task(&self) -> Task {
        match self.items {
            Items::Ner(_) => Task::Ner,
            Items::Re(_) => Task::Re,
        }
    }

    pub fn items(&self) -> &Items {
        &self.items
    }

    pub fn sentences(&self) -> Option<&[TaggedSentence]> {
        match &self.items {
            Items::Ner(s) => Some(s),
            Items::Re(_) => None,
        }
    }

    pub fn examples(&self) -> Option<&[ReExample]> {
        match &self.items {
            Items::Re(e) => Some(e),
            Items::Ner(_) => None,
        }
    }

    pub fn len(&self) -> usize {
        match &self.items {
            Items::Ner(s) => s.len(),
            Items::Re(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Plain sentence text of every item, in order.
    pub fn texts(&self) -> Vec<String> {
        match &self.items {
            Items::Ner(s) => s.iter().map(TaggedSentence::text).collect(),
            Items::Re(e) => e.iter().map(|x| x.sentence.clone()).collect(),
        }
    }

    /// Check every NER sentence under the given IOB mode.
    pub fn validate(&self, mode: IobMode) -> Result<(), (usize, CorpusError)> {
        if let Items::Ner(sentences) = &self.items {
            for (i, s) in sentences.iter().enumerate() {
                validate_iob(s.tags(), mode).map_err(|e| (i, e))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_parse_and_display() {
        for s in ["O", "B-Disease", "I-Chemical", "B-a-b"] {
            assert_eq!(s.parse::<Tag>().unwrap().to_string(), s);
        }
        for bad in ["", "B", "B-", "X-Disease", "o", "I-"] {
            assert!(bad.parse::<Tag>().is_err(), "{bad}");
        }
        let t: Tag = "B-a-b".parse().unwrap();
        assert_eq!(t.entity_type(), Some("a-b"));
        assert_eq!(Tag::Outside.entity_type(), None);
        assert_eq!(Tag::Outside.kind(), TagKind::O);
    }

    #[test]
    fn tag_serde_as_string() {
        let json = serde_json::to_string(&vec![Tag::Outside, Tag::begin("X")]).unwrap();
        assert_eq!(json, r#"["O","B-X"]"#);
        let back: Vec<Tag> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Tag::Outside, Tag::begin("X")]);
        assert!(serde_json::from_str::<Tag>(r#""Q-X""#).is_err());
    }

    #[test]
    fn sentence_length_mismatch() {
        let err = TaggedSentence::new(["a", "b"], vec![Tag::Outside]).unwrap_err();
        assert_eq!(err, CorpusError::LengthMismatch { tokens: 2, tags: 1 });
        assert!(matches!(
            TaggedSentence::new(["a b"], vec![Tag::Outside]),
            Err(CorpusError::InvalidToken(_))
        ));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(Label::parse_lenient("yes."), Some(Label::Yes));
        assert_eq!(Label::parse_lenient(" NO "), Some(Label::No));
        assert_eq!(Label::parse_lenient("maybe"), None);
    }

    #[test]
    fn dataset_name_task_pairing() {
        let ner = Dataset::ner(vec![]);
        assert!(ner.clone().relabel(DatasetName::NcbiDisease, Split::Test).is_ok());
        assert_eq!(
            ner.relabel(DatasetName::Gad, Split::Train).unwrap_err(),
            CorpusError::TaskMismatch {
                name: DatasetName::Gad,
                task: Task::Ner
            }
        );
        assert!(Dataset::re(vec![])
            .relabel(DatasetName::Custom, Split::SeedPool)
            .is_ok());
    }
}
