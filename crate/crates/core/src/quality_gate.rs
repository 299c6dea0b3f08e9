//! Post-processing of generated candidates: validity filtering, exact and
//! near-duplicate removal, and an audit report that always reconciles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{tokenize, validate_iob, IobMode, ReSchema};
use crate::generator::{CandidateSample, Payload};
use crate::ErrorClass;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("invalid gate config: {0}")]
    InvalidConfig(String),
}

impl ErrorClass for GateError {
    fn class(&self) -> &'static str {
        "InvalidConfig"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub jaccard_threshold: f64,
    pub shingle_size: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            jaccard_threshold: 0.8,
            shingle_size: 3,
            min_tokens: 5,
            max_tokens: 128,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(GateError::InvalidConfig("jaccard_threshold must lie in (0, 1]".into()));
        }
        if self.shingle_size == 0 {
            return Err(GateError::InvalidConfig("shingle_size must be at least 1".into()));
        }
        if self.min_tokens > self.max_tokens {
            return Err(GateError::InvalidConfig("min_tokens exceeds max_tokens".into()));
        }
        Ok(())
    }
}

/// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize(text: &str) -> String {
    let composed: String = text.nfc().collect();
    composed.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Word k-shingles of already normalized text. Texts shorter than `k`
/// words yield one shingle holding all their words.
pub fn shingles(normalized: &str, k: usize) -> HashSet<String> {
    let words: Vec<&str> = normalized.split_whitespace().collect();
    if words.is_empty() {
        return HashSet::new();
    }
    if words.len() < k {
        return HashSet::from([words.join(" ")]);
    }
    words.windows(k.max(1)).map(|w| w.join(" ")).collect()
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets are identical (1.0).
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    jaccard_from_counts(inter, a.len(), b.len())
}

fn jaccard_from_counts(inter: usize, a: usize, b: usize) -> f64 {
    let union = a + b - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason")]
pub enum GateReject {
    ExactDup { of: usize },
    NearDup { of: usize, similarity: f64 },
    TooShort { tokens: usize },
    TooLong { tokens: usize },
    NoEntity,
    InvalidIob,
    PlaceholderCount { placeholder: String, count: usize },
}

impl GateReject {
    pub fn name(&self) -> &'static str {
        match self {
            GateReject::ExactDup { .. } => "ExactDup",
            GateReject::NearDup { .. } => "NearDup",
            GateReject::TooShort { .. } => "TooShort",
            GateReject::TooLong { .. } => "TooLong",
            GateReject::NoEntity => "NoEntity",
            GateReject::InvalidIob => "InvalidIob",
            GateReject::PlaceholderCount { .. } => "PlaceholderCount",
        }
    }
}

/// Per-input decision of [`dedup_texts`]: `None` keeps the text. `of`
/// indices refer to input positions.
pub type DedupDecision = Option<GateReject>;

/// First-seen-wins duplicate removal. A text is an exact duplicate when its
/// normalized form was already kept, and a near duplicate when its shingle
/// Jaccard against any kept text reaches the threshold. Candidates are
/// found through an inverted shingle index; kept texts sharing no shingle
/// have similarity 0, below every admissible threshold.
pub fn dedup_texts(texts: &[String], cfg: &GateConfig) -> Vec<DedupDecision> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut kept_sizes: Vec<(usize, usize)> = Vec::new();
    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    let mut out = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let norm = normalize(text);
        if let Some(&of) = seen.get(&norm) {
            out.push(Some(GateReject::ExactDup { of }));
            continue;
        }
        let sh = shingles(&norm, cfg.shingle_size);
        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for s in &sh {
            for &k in index.get(s).map(Vec::as_slice).unwrap_or(&[]) {
                *overlap.entry(k).or_default() += 1;
            }
        }
        let near = overlap.iter().find_map(|(&k, &inter)| {
            let sim = jaccard_from_counts(inter, sh.len(), kept_sizes[k].1);
            (sim >= cfg.jaccard_threshold).then_some((kept_sizes[k].0, sim))
        });
        if let Some((of, similarity)) = near {
            out.push(Some(GateReject::NearDup { of, similarity }));
            continue;
        }
        let slot = kept_sizes.len();
        kept_sizes.push((i, sh.len()));
        for s in sh {
            index.entry(s).or_default().push(slot);
        }
        seen.insert(norm, i);
        out.push(None);
    }
    out
}

fn token_count(sample: &CandidateSample) -> usize {
    match &sample.payload {
        Payload::Ner(s) => s.len(),
        Payload::Re(e) => tokenize(&e.sentence).len(),
    }
}

/// Length bounds, then task rules: NER needs strict IOB and at least one
/// span; RE needs each placeholder exactly once.
pub fn filter_valid(sample: &CandidateSample, cfg: &GateConfig) -> Result<(), GateReject> {
    let tokens = token_count(sample);
    if tokens < cfg.min_tokens {
        return Err(GateReject::TooShort { tokens });
    }
    if tokens > cfg.max_tokens {
        return Err(GateReject::TooLong { tokens });
    }
    match &sample.payload {
        Payload::Ner(s) => {
            if validate_iob(s.tags(), IobMode::Strict).is_err() {
                return Err(GateReject::InvalidIob);
            }
            if s.spans().is_empty() {
                return Err(GateReject::NoEntity);
            }
        }
        Payload::Re(e) => {
            if let Some((p, count)) = ReSchema::default().miscounted(&e.sentence).into_iter().next() {
                return Err(GateReject::PlaceholderCount {
                    placeholder: p.to_string(),
                    count,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub exact_dup_count: usize,
    pub near_dup_count: usize,
    pub invalid_count: usize,
    pub reject_reasons: BTreeMap<String, usize>,
}

impl GateReport {
    pub fn reconciles(&self) -> bool {
        self.input_count == self.kept_count + self.exact_dup_count + self.near_dup_count + self.invalid_count
            && self.reject_reasons.values().sum::<usize>() == self.input_count - self.kept_count
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("input", self.input_count),
            ("kept", self.kept_count),
            ("exact duplicates", self.exact_dup_count),
            ("near duplicates", self.near_dup_count),
            ("invalid", self.invalid_count),
        ];
        for (name, n) in rows {
            let _ = writeln!(out, "{name:<18}{n:>8}");
        }
        for (reason, n) in &self.reject_reasons {
            let _ = writeln!(out, "  {reason:<16}{n:>8}");
        }
        out
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes") + "\n"
    }
}

/// A gated-out sample with its reason, as written to the quarantine file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub index: usize,
    pub prompt_id: String,
    pub seed_ref: String,
    pub batch: usize,
    pub line: usize,
    pub text: String,
    #[serde(flatten)]
    pub reason: GateReject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    pub kept: Vec<CandidateSample>,
    pub quarantine: Vec<QuarantineRecord>,
    pub report: GateReport,
}

impl GateOutcome {
    pub fn quarantine_jsonl(&self) -> String {
        self.quarantine
            .iter()
            .map(|q| serde_json::to_string(q).expect("record serializes") + "\n")
            .collect()
    }
}

/// Validity first, then duplicates among the valid samples, so an invalid
/// line never shadows a valid copy that follows it.
pub fn run_gate(samples: &[CandidateSample], cfg: &GateConfig) -> Result<GateOutcome, GateError> {
    cfg.validate()?;
    let mut decisions: Vec<Option<GateReject>> = samples.iter().map(|s| filter_valid(s, cfg).err()).collect();
    let valid: Vec<usize> = (0..samples.len()).filter(|&i| decisions[i].is_none()).collect();
    let texts: Vec<String> = valid.iter().map(|&i| samples[i].payload.text()).collect();
    for (pos, decision) in dedup_texts(&texts, cfg).into_iter().enumerate() {
        decisions[valid[pos]] = decision.map(|d| match d {
            GateReject::ExactDup { of } => GateReject::ExactDup { of: valid[of] },
            GateReject::NearDup { of, similarity } => GateReject::NearDup {
                of: valid[of],
                similarity,
            },
            other => other,
        });
    }
    let mut report = GateReport {
        input_count: samples.len(),
        ..GateReport::default()
    };
    let mut kept = Vec::new();
    let mut quarantine = Vec::new();
    for (i, (sample, decision)) in samples.iter().zip(decisions).enumerate() {
        let Some(reason) = decision else {
            kept.push(sample.clone());
            continue;
        };
        match &reason {
            GateReject::ExactDup { .. } => report.exact_dup_count += 1,
            GateReject::NearDup { .. } => report.near_dup_count += 1,
            _ => report.invalid_count += 1,
        }
        *report.reject_reasons.entry(reason.name().to_string()).or_default() += 1;
        quarantine.push(QuarantineRecord {
            index: i,
            prompt_id: sample.prompt_id.clone(),
            seed_ref: sample.seed_ref.clone(),
            batch: sample.batch,
            line: sample.line,
            text: sample.payload.text(),
            reason,
        });
    }
    report.kept_count = kept.len();
    Ok(GateOutcome {
        kept,
        quarantine,
        report,
    })
}

/// Fraction of `texts` whose normalized form occurs in `reference`.
pub fn exact_overlap_rate(texts: &[String], reference: &[String]) -> f64 {
    if texts.is_empty() {
        return 0.0;
    }
    let reference: HashSet<String> = reference.iter().map(|t| normalize(t)).collect();
    let hits = texts.iter().filter(|t| reference.contains(&normalize(t))).count();
    hits as f64 / texts.len() as f64
}
