//! CoNLL-style NER files: `token<TAB>tag` per line, blank line between
//! sentences, UTF-8, LF line endings.

use super::{CorpusError, Dataset, Tag, TaggedSentence};

pub(crate) fn decode_utf8(bytes: &[u8]) -> Result<&str, CorpusError> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        CorpusError::InvalidUtf8 { line }
    })
}

/// Parse a CoNLL file into an NER dataset (name `custom`, split `train`;
/// use [`Dataset::relabel`] to attach the benchmark identity). Tags are
/// taken as written; IOB validity is checked separately.
pub fn parse_conll(bytes: &[u8]) -> Result<Dataset, CorpusError> {
    Ok(Dataset::ner(parse_conll_sentences(bytes)?))
}

pub fn parse_conll_sentences(bytes: &[u8]) -> Result<Vec<TaggedSentence>, CorpusError> {
    let text = decode_utf8(bytes)?;
    let mut sentences = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();

    let mut flush = |words: &mut Vec<String>, tags: &mut Vec<Tag>| -> Result<(), CorpusError> {
        if !words.is_empty() {
            sentences.push(TaggedSentence::new(std::mem::take(words), std::mem::take(tags))?);
        }
        Ok(())
    };

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut words, &mut tags)?;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            let column = if fields.len() < 2 {
                line.chars().count() + 1
            } else {
                fields[0].chars().count() + fields[1].chars().count() + 2
            };
            return Err(CorpusError::MalformedLine {
                line: line_no,
                column,
                reason: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let (word, tag) = (fields[0], fields[1]);
        if word.is_empty() || word.contains(char::is_whitespace) {
            return Err(CorpusError::MalformedLine {
                line: line_no,
                column: 1,
                reason: format!("invalid token {word:?}"),
            });
        }
        let tag = tag.parse::<Tag>().map_err(|e| CorpusError::UnknownTag {
            line: line_no,
            column: word.chars().count() + 2,
            tag: e.0,
        })?;
        words.push(word.to_string());
        tags.push(tag);
    }
    flush(&mut words, &mut tags)?;
    if sentences.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(sentences)
}

pub fn write_conll(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens().iter().zip(s.tags()) {
            out.push_str(&tok.text);
            out.push('\t');
            out.push_str(&tag.to_string());
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
