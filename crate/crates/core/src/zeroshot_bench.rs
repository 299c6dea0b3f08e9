//! Zero-shot evaluation harness: one task prompt per test item, tolerant
//! parsing of the replies, and realignment of predicted IOB tags onto the
//! gold tokenization.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{repair_iob, Dataset, Items, Label, ReExample, Tag, TaggedSentence, Task, Token};
use crate::llm_gateway::{ChatRequest, Gateway, GatewayError, DEFAULT_MODEL, TASK_TEMPERATURE};
use crate::prompt_forge::{Bindings, CandidateSampler, ForgeError, Placeholder, PromptTask, PromptTemplate};
use crate::scorer::{cls_prf, span_prf, Metrics, Prediction, ScoreError};
use crate::ErrorClass;

/// Test items used when no subset size is configured.
pub const DEFAULT_SUBSET: usize = 200;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchError {
    #[error("template task {template} cannot score a {dataset} dataset")]
    TaskMismatch { template: PromptTask, dataset: Task },
    #[error(transparent)]
    Template(#[from] ForgeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("dataset has no items")]
    EmptyDataset,
    #[error("{replies} replies for {items} items")]
    ReplyCount { items: usize, replies: usize },
}

impl ErrorClass for BenchError {
    fn class(&self) -> &'static str {
        match self {
            BenchError::TaskMismatch { .. } => "TaskMismatch",
            BenchError::Template(e) => e.class(),
            BenchError::Gateway(e) => e.class(),
            BenchError::EmptyDataset => "EmptyInput",
            BenchError::ReplyCount { .. } => "LengthMismatch",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum BenchItem<'a> {
    Ner(&'a TaggedSentence),
    Re(&'a ReExample),
}

impl BenchItem<'_> {
    pub fn task(&self) -> Task {
        match self {
            BenchItem::Ner(_) => Task::Ner,
            BenchItem::Re(_) => Task::Re,
        }
    }
}

fn check_task(template: &PromptTemplate, task: Task) -> Result<(), BenchError> {
    let ok = matches!(
        (template.task, task),
        (PromptTask::NerZeroshot, Task::Ner) | (PromptTask::ReZeroshot, Task::Re)
    );
    if ok {
        Ok(())
    } else {
        Err(BenchError::TaskMismatch {
            template: template.task,
            dataset: task,
        })
    }
}

/// NER binds `@TEXT` to the detokenized sentence; RE appends the sentence
/// to the instruction.
pub fn build_task_prompt(item: BenchItem<'_>, template: &PromptTemplate) -> Result<ChatRequest, BenchError> {
    check_task(template, item.task())?;
    let text = match item {
        BenchItem::Ner(s) => {
            let bindings: Bindings = [(Placeholder::Text, s.text())].into();
            template.render(&bindings)?
        }
        BenchItem::Re(e) => {
            let instruction = template.render(&Bindings::new())?;
            format!("{instruction} {}", e.sentence)
        }
    };
    Ok(ChatRequest::user(text, TASK_TEMPERATURE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    CodeFence,
    Preamble,
    UnknownTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub kind: DiagnosticKind,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IobParse {
    pub pairs: Vec<(String, Tag)>,
    pub diagnostics: Vec<Diagnostic>,
    /// Non-blank lines that produced at least one pair.
    pub parsed_lines: usize,
}

impl IobParse {
    /// Lines skipped entirely (fences, preambles).
    pub fn skipped_lines(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.kind != DiagnosticKind::UnknownTag)
            .count()
    }
}

fn looks_like_tag(s: &str) -> bool {
    let s = s.trim_end_matches([',', ';', '.']);
    s.eq_ignore_ascii_case("o")
        || s.len() > 2 && (s[..2].eq_ignore_ascii_case("b-") || s[..2].eq_ignore_ascii_case("i-"))
}

/// Maps a tag string onto the declared entity types (case-insensitive).
/// `None` for anything that is not a usable tag.
fn normalize_tag(raw: &str, types: &[String]) -> Option<Tag> {
    let s = raw.trim().trim_end_matches([',', ';', '.']);
    if s.eq_ignore_ascii_case("o") {
        return Some(Tag::Outside);
    }
    if s.len() <= 2 || !s.is_char_boundary(2) {
        return None;
    }
    let (prefix, ty) = s.split_at(2);
    if ty.trim().is_empty() || ty.contains(char::is_whitespace) {
        return None;
    }
    let ty = if types.is_empty() {
        ty.to_string()
    } else {
        types.iter().find(|t| t.eq_ignore_ascii_case(ty))?.clone()
    };
    match prefix.to_ascii_lowercase().as_str() {
        "b-" => Some(Tag::Begin(ty)),
        "i-" => Some(Tag::Inside(ty)),
        _ => None,
    }
}

/// Drops a leading list marker (`- `, `* `, `• `, `3. `, `3) `) from a word.
fn strip_list_marker(word: &str) -> &str {
    let rest = ["- ", "* ", "\u{2022} "]
        .iter()
        .find_map(|m| word.strip_prefix(m))
        .or_else(|| {
            let digits = word.len() - word.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            let tail = &word[digits..];
            (digits > 0)
                .then(|| tail.strip_prefix(". ").or_else(|| tail.strip_prefix(") ")))
                .flatten()
        });
    match rest.map(str::trim) {
        Some(r) if !r.is_empty() => r,
        _ => word,
    }
}

/// Word/tag pairs of one line, or empty when the line carries no tag.
fn line_pairs(line: &str, raw: &str) -> Vec<(String, String)> {
    let pair = |w: &str, t: &str| (strip_list_marker(w.trim()).to_string(), t.trim().to_string());
    if line.starts_with('|') {
        let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
        return match cells.as_slice() {
            [w, t] if !w.is_empty() && looks_like_tag(t) => vec![pair(w, t)],
            _ => Vec::new(),
        };
    }
    let fields: Vec<&str> = line.split_whitespace().collect();
    if line.matches('\t').count() == 1 {
        let (w, t) = line.split_once('\t').expect("tab present");
        if w.trim().is_empty() {
            Vec::new()
        } else {
            vec![pair(w, t)]
        }
    } else if fields.len() >= 4
        && fields.len().is_multiple_of(2)
        && fields.iter().skip(1).step_by(2).all(|f| looks_like_tag(f))
    {
        fields.chunks(2).map(|c| pair(c[0], c[1])).collect()
    } else if fields.len() >= 2 && looks_like_tag(fields[fields.len() - 1]) && (fields.len() == 2 || raw.contains("  "))
    {
        let tag = fields[fields.len() - 1];
        vec![pair(&line[..line.rfind(tag).expect("tag is in line")], tag)]
    } else {
        Vec::new()
    }
}

/// Tolerant reader for `word<TAB>tag` replies. Also accepts runs of spaces
/// in place of tabs, several `word tag` pairs on one line, markdown table
/// rows and list markers before the word. Fences and lines without a tag
/// are skipped with a diagnostic; unusable tags become `O` with a
/// diagnostic. `types` lists the dataset's entity types.
pub fn parse_iob_reply(text: &str, types: &[String]) -> IobParse {
    let mut out = IobParse::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let diag = |kind| Diagnostic {
            line: idx + 1,
            kind,
            text: raw.to_string(),
        };
        if line.starts_with("```") {
            out.diagnostics.push(diag(DiagnosticKind::CodeFence));
            continue;
        }
        let pairs = line_pairs(line, raw);
        if pairs.is_empty() {
            out.diagnostics.push(diag(DiagnosticKind::Preamble));
            continue;
        }
        out.parsed_lines += 1;
        for (word, tag) in pairs {
            let tag = normalize_tag(&tag, types).unwrap_or_else(|| {
                out.diagnostics.push(diag(DiagnosticKind::UnknownTag));
                Tag::Outside
            });
            out.pairs.push((word, tag));
        }
    }
    out
}

/// Projects predicted tags onto gold tokens through a longest common
/// subsequence of lowercased token texts, preferring the earliest match.
/// Unmatched gold tokens get `O`; orphan `I-` tags are repaired.
pub fn realign(pred: &[(String, Tag)], gold: &[Token]) -> Vec<Tag> {
    let p: Vec<String> = pred.iter().map(|(w, _)| w.to_lowercase()).collect();
    let g: Vec<String> = gold.iter().map(|t| t.text.to_lowercase()).collect();
    let (n, m) = (p.len(), g.len());
    // lcs[i][j] = LCS length of p[i..] and g[j..]
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if p[i] == g[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut tags = vec![Tag::Outside; m];
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if p[i] == g[j] {
            tags[j] = pred[i].1.clone();
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    repair_iob(&tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelReply {
    Yes,
    No,
    Invalid,
}

impl LabelReply {
    /// Label used for scoring: invalid replies count as No.
    pub fn scored(self) -> Label {
        match self {
            LabelReply::Yes => Label::Yes,
            LabelReply::No | LabelReply::Invalid => Label::No,
        }
    }
}

/// Looks for standalone yes/no words on the first non-blank line. Both or
/// neither present is `Invalid`.
pub fn parse_label_reply(text: &str) -> LabelReply {
    let Some(first) = text.lines().find(|l| !l.trim().is_empty()) else {
        return LabelReply::Invalid;
    };
    let words: BTreeSet<String> = first
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .collect();
    match (words.contains("yes"), words.contains("no")) {
        (true, false) => LabelReply::Yes,
        (false, true) => LabelReply::No,
        _ => LabelReply::Invalid,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<Tag>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// Raw label verdict before invalid replies were scored as No.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<LabelReply>,
    pub raw_reply: String,
    pub diagnostics: Vec<Diagnostic>,
    /// No usable prediction could be recovered from the reply.
    pub failed: bool,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub subset: Option<usize>,
    pub concurrency: usize,
    pub model: String,
    /// Declared entity types; empty means "derive from gold".
    pub entity_types: Vec<String>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            subset: Some(DEFAULT_SUBSET),
            concurrency: 4,
            model: DEFAULT_MODEL.to_string(),
            entity_types: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub dataset: Dataset,
    pub template: PromptTemplate,
    pub records: Vec<BenchRecord>,
}

impl BenchRun {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed).count()
    }

    /// Share of RE replies that were neither a clear Yes nor a clear No.
    pub fn invalid_rate(&self) -> f64 {
        let verdicts: Vec<LabelReply> = self.records.iter().filter_map(|r| r.verdict).collect();
        if verdicts.is_empty() {
            return 0.0;
        }
        verdicts.iter().filter(|v| **v == LabelReply::Invalid).count() as f64 / verdicts.len() as f64
    }

    /// Scorer-ready predictions; failed items are all-O or No.
    pub fn predictions(&self) -> Vec<Prediction> {
        self.records
            .iter()
            .map(|r| Prediction {
                id: r.id,
                tags: r.tags.clone(),
                label: r.label,
            })
            .collect()
    }

    pub fn metrics(&self) -> Result<Metrics, ScoreError> {
        match self.dataset.items() {
            Items::Ner(gold) => {
                let pred: Vec<Vec<Tag>> = self
                    .records
                    .iter()
                    .map(|r| r.tags.clone().unwrap_or_default())
                    .collect();
                span_prf(gold, &pred)
            }
            Items::Re(gold) => {
                let g: Vec<Label> = gold.iter().map(|e| e.label).collect();
                let p: Vec<Label> = self.records.iter().map(|r| r.label.unwrap_or(Label::No)).collect();
                cls_prf(&g, &p)
            }
        }
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// The first `k` items in file order.
pub fn subset(dataset: &Dataset, k: Option<usize>) -> Dataset {
    let Some(k) = k else { return dataset.clone() };
    let items = match dataset.items() {
        Items::Ner(s) => Items::Ner(s.iter().take(k).cloned().collect()),
        Items::Re(e) => Items::Re(e.iter().take(k).cloned().collect()),
    };
    Dataset::new(dataset.name(), dataset.split(), items).expect("subset keeps the task")
}

pub fn gold_entity_types(sentences: &[TaggedSentence]) -> Vec<String> {
    let types: BTreeSet<String> = sentences
        .iter()
        .flat_map(|s| s.tags().iter().filter_map(|t| t.entity_type().map(String::from)))
        .collect();
    types.into_iter().collect()
}

fn score_reply(id: usize, item: BenchItem<'_>, reply: String, cached: bool, types: &[String]) -> BenchRecord {
    match item {
        BenchItem::Ner(gold) => {
            let parse = parse_iob_reply(&reply, types);
            let failed = parse.pairs.is_empty();
            let tags = realign(&parse.pairs, gold.tokens());
            BenchRecord {
                id,
                tags: Some(tags),
                label: None,
                verdict: None,
                raw_reply: reply,
                diagnostics: parse.diagnostics,
                failed,
                cached,
            }
        }
        BenchItem::Re(_) => {
            let verdict = parse_label_reply(&reply);
            BenchRecord {
                id,
                tags: None,
                label: Some(verdict.scored()),
                verdict: Some(verdict),
                raw_reply: reply,
                diagnostics: Vec::new(),
                failed: verdict == LabelReply::Invalid,
                cached,
            }
        }
    }
}

/// A finished bench call: reply text and whether it came from the cache.
type Slot = Option<Result<(String, bool), BenchError>>;

/// Sends one prompt per item (concurrently, results keyed by item index)
/// and parses every reply. Gateway errors abort the run; cached replies
/// make a rerun cheap.
pub fn run_bench(
    gateway: &Gateway,
    dataset: &Dataset,
    template: &PromptTemplate,
    cfg: &BenchConfig,
) -> Result<BenchRun, BenchError> {
    let data = subset(dataset, cfg.subset);
    if data.is_empty() {
        return Err(BenchError::EmptyDataset);
    }
    check_task(template, data.task())?;
    let item = |i: usize| match data.items() {
        Items::Ner(s) => BenchItem::Ner(&s[i]),
        Items::Re(e) => BenchItem::Re(&e[i]),
    };
    let n = data.len();
    let slots: Mutex<Vec<Slot>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.concurrency.clamp(1, n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = build_task_prompt(item(i), template).and_then(|req| {
                    let resp = gateway.complete(&req.with_model(cfg.model.clone()))?;
                    Ok((resp.content, resp.cached))
                });
                slots.lock().expect("bench slots poisoned")[i] = Some(result);
            });
        }
    });
    let replies = slots
        .into_inner()
        .expect("bench slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let mut run = score_replies(
        data,
        template,
        replies.iter().map(|(r, _)| r.clone()).collect(),
        &cfg.entity_types,
    )?;
    for (record, (_, cached)) in run.records.iter_mut().zip(replies) {
        record.cached = cached;
    }
    Ok(run)
}

/// Parses one reply per item, in item order. `entity_types` empty means
/// the types found in the gold tags.
pub fn score_replies(
    dataset: Dataset,
    template: &PromptTemplate,
    replies: Vec<String>,
    entity_types: &[String],
) -> Result<BenchRun, BenchError> {
    check_task(template, dataset.task())?;
    if replies.len() != dataset.len() {
        return Err(BenchError::ReplyCount {
            items: dataset.len(),
            replies: replies.len(),
        });
    }
    let types = match dataset.sentences() {
        _ if !entity_types.is_empty() => entity_types.to_vec(),
        Some(s) => gold_entity_types(s),
        None => Vec::new(),
    };
    let records = replies
        .into_iter()
        .enumerate()
        .map(|(i, reply)| {
            let item = match dataset.items() {
                Items::Ner(s) => BenchItem::Ner(&s[i]),
                Items::Re(e) => BenchItem::Re(&e[i]),
            };
            score_reply(i, item, reply, false, &types)
        })
        .collect();
    Ok(BenchRun {
        dataset,
        template: template.clone(),
        records,
    })
}

/// Preview samples for zero-shot prompts during refinement: the raw
/// replies for the first items of a development set.
pub struct BenchSampler {
    pub dataset: Dataset,
    pub model: String,
}

impl CandidateSampler for BenchSampler {
    fn samples(&self, template: &PromptTemplate, count: usize, gateway: &Gateway) -> Result<Vec<String>, ForgeError> {
        let data = subset(&self.dataset, Some(count));
        let items: Vec<BenchItem<'_>> = match data.items() {
            Items::Ner(s) => s.iter().map(BenchItem::Ner).collect(),
            Items::Re(e) => e.iter().map(BenchItem::Re).collect(),
        };
        items
            .into_iter()
            .map(|item| {
                let req = build_task_prompt(item, template).map_err(|e| match e {
                    BenchError::Template(f) => f,
                    BenchError::Gateway(g) => ForgeError::Gateway(g),
                    other => ForgeError::Sampler(other.to_string()),
                })?;
                Ok(gateway.complete(&req.with_model(self.model.clone()))?.content)
            })
            .collect()
    }
}
