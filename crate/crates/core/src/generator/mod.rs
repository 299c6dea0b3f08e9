//! Candidate synthetic samples: NER sentences generated around a seed
//! entity and annotated by token matching, and RE rows generated from
//! sampled seed examples.

mod run;
mod sampler;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use run::{gen_ner_all, gen_ner_batch, gen_re_batch, gen_re_run, BatchResult, ProvenanceRecord, ReRun};
pub use sampler::GenerationSampler;

use crate::corpus::re_file::{parse_row, RowError};
use crate::corpus::{tokenize, DatasetName, EntitySpan, Label, ReExample, Tag, TaggedSentence, Task};
use crate::llm_gateway::{GatewayError, DEFAULT_MODEL};
use crate::prompt_forge::{ForgeError, PromptTask};
use crate::ErrorClass;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] ForgeError),
    #[error("empty reply for seed {seed_ref}")]
    EmptyReply { seed_ref: String },
    #[error("seed pool has {available} {label} examples, {needed} needed per round")]
    PoolTooSmall {
        label: Label,
        needed: usize,
        available: usize,
    },
    #[error("template task is {found}, expected {expected}")]
    WrongTemplate { expected: PromptTask, found: PromptTask },
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

impl ErrorClass for GenError {
    fn class(&self) -> &'static str {
        match self {
            GenError::Gateway(e) => e.class(),
            GenError::Template(e) => e.class(),
            GenError::EmptyReply { .. } => "EmptyReply",
            GenError::PoolTooSmall { .. } => "PoolTooSmall",
            GenError::WrongTemplate { .. } => "WrongTemplate",
            GenError::InvalidSeed(_) => "InvalidSeed",
            GenError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

/// Why a generated line did not become a candidate sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    EntityNotFound,
    MissingLabel,
    BadLabel,
    NoDelimiter,
    MissingPlaceholder,
    /// The line was valid but the per-call or per-run quota was already met.
    QuotaExceeded,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::EntityNotFound => "EntityNotFound",
            RejectReason::MissingLabel => "MissingLabel",
            RejectReason::BadLabel => "BadLabel",
            RejectReason::NoDelimiter => "NoDelimiter",
            RejectReason::MissingPlaceholder => "MissingPlaceholder",
            RejectReason::QuotaExceeded => "QuotaExceeded",
        }
    }
}

impl From<RowError> for RejectReason {
    fn from(e: RowError) -> Self {
        match e {
            RowError::NoDelimiter => RejectReason::NoDelimiter,
            RowError::MissingLabel => RejectReason::MissingLabel,
            RowError::BadLabel => RejectReason::BadLabel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedEntity {
    pub surface: String,
    pub entity_type: String,
    pub origin: DatasetName,
}

impl SeedEntity {
    pub fn new(surface: &str, entity_type: &str, origin: DatasetName) -> Result<Self, GenError> {
        let surface = surface.trim();
        if tokenize(surface).is_empty() {
            return Err(GenError::InvalidSeed(format!("{surface:?} has no tokens")));
        }
        if entity_type.trim().is_empty() {
            return Err(GenError::InvalidSeed("empty entity type".into()));
        }
        Ok(SeedEntity {
            surface: surface.to_string(),
            entity_type: entity_type.trim().to_string(),
            origin,
        })
    }
}

fn fold(words: impl IntoIterator<Item = impl AsRef<str>>) -> Vec<String> {
    words.into_iter().map(|w| w.as_ref().to_lowercase()).collect()
}

/// Unique gold mentions of a tagged corpus in first-seen order. Mentions
/// are grouped by case-folded token sequence and type; the longest
/// surface in a group wins, ties to the first seen.
pub fn extract_seed_entities(sentences: &[TaggedSentence], origin: DatasetName) -> Vec<SeedEntity> {
    let mut order: Vec<SeedEntity> = Vec::new();
    let mut index: HashMap<(Vec<String>, String), usize> = HashMap::new();
    for sentence in sentences {
        let words: Vec<&str> = sentence.words().collect();
        for span in sentence.spans() {
            let surface = words[span.start..=span.end].join(" ");
            let key = (fold(&words[span.start..=span.end]), span.entity_type.clone());
            match index.get(&key) {
                Some(&i) if order[i].surface.len() < surface.len() => order[i].surface = surface,
                Some(_) => {}
                None => {
                    index.insert(key, order.len());
                    order.push(SeedEntity {
                        surface,
                        entity_type: span.entity_type.clone(),
                        origin,
                    });
                }
            }
        }
    }
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPool {
    pub task: Task,
    pub ner_entities: Vec<SeedEntity>,
    pub re_examples: Vec<ReExample>,
}

impl SeedPool {
    pub fn ner(entities: Vec<SeedEntity>) -> Result<Self, GenError> {
        if entities.is_empty() {
            return Err(GenError::InvalidSeed("no seed entities".into()));
        }
        Ok(SeedPool {
            task: Task::Ner,
            ner_entities: entities,
            re_examples: Vec::new(),
        })
    }

    pub fn re(examples: Vec<ReExample>) -> Result<Self, GenError> {
        for label in [Label::Yes, Label::No] {
            if !examples.iter().any(|e| e.label == label) {
                return Err(GenError::PoolTooSmall {
                    label,
                    needed: 1,
                    available: 0,
                });
            }
        }
        Ok(SeedPool {
            task: Task::Re,
            ner_entities: Vec::new(),
            re_examples: examples,
        })
    }

    /// Draws `per_label` positives and negatives from a training set with a
    /// seeded RNG, standing in for a manual pick.
    pub fn sample_re(train: &[ReExample], per_label: usize, rng_seed: u64) -> Result<Self, GenError> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
        let mut picked = Vec::new();
        for label in [Label::Yes, Label::No] {
            let pool: Vec<&ReExample> = train.iter().filter(|e| e.label == label).collect();
            let k = per_label.min(pool.len());
            let mut idx = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
            idx.sort_unstable();
            picked.extend(idx.into_iter().map(|i| pool[i].clone()));
        }
        SeedPool::re(picked)
    }

    /// Indices into `re_examples` carrying `label`.
    pub fn indices(&self, label: Label) -> Vec<usize> {
        (0..self.re_examples.len())
            .filter(|&i| self.re_examples[i].label == label)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_per_entity: usize,
    pub pos_per_round: usize,
    pub neg_per_round: usize,
    pub target_size: usize,
    pub rng_seed: u64,
    pub concurrency: usize,
    pub model: String,
    /// Upper bound on RE rounds; `None` allows four times the rounds an
    /// all-valid run would need.
    pub max_rounds: Option<usize>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_per_entity: 30,
            pos_per_round: 3,
            neg_per_round: 3,
            target_size: 0,
            rng_seed: 0,
            concurrency: 4,
            model: DEFAULT_MODEL.to_string(),
            max_rounds: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidConfig(m.to_string()));
        if self.n_per_entity == 0 {
            return bad("n_per_entity must be positive");
        }
        if self.pos_per_round == 0 || self.neg_per_round == 0 {
            return bad("per-round counts must be positive");
        }
        if self.concurrency == 0 {
            return bad("concurrency must be positive");
        }
        Ok(())
    }

    pub fn re_round_limit(&self) -> usize {
        self.max_rounds.unwrap_or_else(|| {
            let per_round = self.pos_per_round + self.neg_per_round;
            4 * self.target_size.div_ceil(per_round).max(1)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Ner(TaggedSentence),
    Re(ReExample),
}

impl Payload {
    /// Surface text used for normalization and duplicate detection.
    pub fn text(&self) -> String {
        match self {
            Payload::Ner(s) => s.text(),
            Payload::Re(e) => e.sentence.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub payload: Payload,
    pub prompt_id: String,
    pub seed_ref: String,
    pub round: u32,
    /// Position of the LLM call in the run; NER batches follow seed order.
    pub batch: usize,
    /// 1-based line of the reply the sample came from.
    pub line: usize,
    pub raw_line: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub prompt_id: String,
    pub seed_ref: String,
    pub round: u32,
    pub batch: usize,
    pub line: usize,
    pub raw_line: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Sentence(String),
    Row { sentence: String, label: Label },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCandidate {
    pub line: usize,
    pub raw: String,
    pub parsed: ParsedLine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineReject {
    pub line: usize,
    pub raw: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedReply {
    pub accepts: Vec<RawCandidate>,
    pub rejects: Vec<LineReject>,
}

/// Removes a leading list marker: `12.`, `12)`, `(12)`, `-`, `*` or `•`.
fn strip_list_marker(line: &str) -> &str {
    let t = line.trim();
    for bullet in ['-', '*', '\u{2022}'] {
        if let Some(rest) = t.strip_prefix(bullet) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    let (inner, paren) = match t.strip_prefix('(') {
        Some(r) => (r, true),
        None => (t, false),
    };
    let digits = inner.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 4 {
        return t;
    }
    let after = &inner[digits..];
    let rest = if paren {
        after.strip_prefix(')')
    } else {
        after.strip_prefix('.').or_else(|| after.strip_prefix(')'))
    };
    match rest {
        // "1.5 mg" is a number, not a marker
        Some(r)
            if r.is_empty() || r.starts_with(char::is_whitespace) || !r.starts_with(|c: char| c.is_ascii_digit()) =>
        {
            r.trim_start()
        }
        _ => t,
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
        if s.len() >= 2 {
            if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
                return inner.trim();
            }
        }
    }
    s
}

/// Splits a generation reply into candidate lines. Total: every non-blank
/// line ends up in exactly one of `accepts` or `rejects`.
pub fn parse_generation_reply(text: &str, task: PromptTask) -> ParsedReply {
    let mut out = ParsedReply::default();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let body = strip_list_marker(raw);
        match task {
            PromptTask::ReGen => match parse_row(body) {
                Ok((sentence, label, _)) => out.accepts.push(RawCandidate {
                    line,
                    raw: raw.to_string(),
                    parsed: ParsedLine::Row {
                        sentence: strip_quotes(&sentence).to_string(),
                        label,
                    },
                }),
                Err(e) => out.rejects.push(LineReject {
                    line,
                    raw: raw.to_string(),
                    reason: e.into(),
                }),
            },
            _ => {
                let sentence = strip_quotes(body);
                if !sentence.is_empty() {
                    out.accepts.push(RawCandidate {
                        line,
                        raw: raw.to_string(),
                        parsed: ParsedLine::Sentence(sentence.to_string()),
                    });
                }
            }
        }
    }
    out
}

/// Tags every non-overlapping, case-insensitive occurrence of the seed's
/// token sequence, scanning left to right.
pub fn annotate_entity(sentence: &str, entity: &SeedEntity) -> Result<TaggedSentence, RejectReason> {
    let tokens = tokenize(sentence);
    let needle = fold(tokenize(&entity.surface).iter().map(|t| t.text.as_str()));
    let hay = fold(tokens.iter().map(|t| t.text.as_str()));
    let mut spans = Vec::new();
    let mut i = 0;
    while !needle.is_empty() && i + needle.len() <= hay.len() {
        if hay[i..i + needle.len()] == needle[..] {
            spans.push(EntitySpan::new(i, i + needle.len() - 1, entity.entity_type.clone()));
            i += needle.len();
        } else {
            i += 1;
        }
    }
    if spans.is_empty() {
        return Err(RejectReason::EntityNotFound);
    }
    let mut tags = vec![Tag::Outside; tokens.len()];
    for span in &spans {
        tags[span.start] = Tag::begin(span.entity_type.clone());
        for tag in &mut tags[span.start + 1..=span.end] {
            *tag = Tag::inside(span.entity_type.clone());
        }
    }
    Ok(TaggedSentence::from_tokens(tokens, tags).expect("tokenizer output is well-formed"))
}
