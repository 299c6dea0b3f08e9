//! IOB validation and the tags <-> spans bijection.

use super::{CorpusError, EntitySpan, Tag, Token};

/// How orphan `I` tags are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IobMode {
    /// Reject orphans. Used for human-authored gold files.
    Strict,
    /// Rewrite each orphan `I-X` to `B-X`.
    #[default]
    Lenient,
}

fn continues(prev: Option<&Tag>, ty: &str) -> bool {
    matches!(prev, Some(Tag::Begin(p) | Tag::Inside(p)) if p == ty)
}

pub fn validate_iob(tags: &[Tag], mode: IobMode) -> Result<Vec<Tag>, CorpusError> {
    match mode {
        IobMode::Strict => {
            for (i, tag) in tags.iter().enumerate() {
                if let Tag::Inside(ty) = tag {
                    if !continues(i.checked_sub(1).map(|p| &tags[p]), ty) {
                        return Err(CorpusError::OrphanInsideTag { position: i });
                    }
                }
            }
            Ok(tags.to_vec())
        }
        IobMode::Lenient => Ok(repair_iob(tags)),
    }
}

/// Lenient repair. Looks at the already-repaired previous tag, which is
/// equivalent since repair never changes a tag's type.
pub fn repair_iob(tags: &[Tag]) -> Vec<Tag> {
    let mut out: Vec<Tag> = Vec::with_capacity(tags.len());
    for tag in tags {
        let fixed = match tag {
            Tag::Inside(ty) if !continues(out.last(), ty) => Tag::Begin(ty.clone()),
            other => other.clone(),
        };
        out.push(fixed);
    }
    out
}

/// Maximal `B I*` runs of one type, sorted by start. Orphan `I` tags are
/// repaired leniently first.
pub fn spans_from_tags(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, tag) in repair_iob(tags).into_iter().enumerate() {
        match tag {
            Tag::Outside => spans.extend(open.take()),
            Tag::Begin(ty) => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(i, i, ty));
            }
            Tag::Inside(_) => {
                if let Some(span) = open.as_mut() {
                    span.end = i;
                }
            }
        }
    }
    spans.extend(open);
    spans
}

pub fn tags_from_spans(tokens: &[Token], spans: &[EntitySpan]) -> Result<Vec<Tag>, CorpusError> {
    tags_from_spans_len(tokens.len(), spans)
}

pub fn tags_from_spans_len(len: usize, spans: &[EntitySpan]) -> Result<Vec<Tag>, CorpusError> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start > s.end || s.end >= len {
            return Err(CorpusError::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(CorpusError::OverlappingSpans {
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }
    let mut tags = vec![Tag::Outside; len];
    for s in sorted {
        tags[s.start] = Tag::Begin(s.entity_type.clone());
        for tag in &mut tags[s.start + 1..=s.end] {
            *tag = Tag::Inside(s.entity_type.clone());
        }
    }
    Ok(tags)
}
