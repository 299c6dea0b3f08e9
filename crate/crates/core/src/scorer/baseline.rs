//! Training-free baselines used as the learning-curve evaluation hook when
//! no external trainer is attached. They respond to training data the way a
//! model would (more data, more coverage) and are fully deterministic.

use std::collections::{BTreeMap, HashSet};

use crate::corpus::{Label, ReExample, Tag, TaggedSentence};

/// Tags the longest known entity surface at each position, left to right.
/// Matching is on lowercased token sequences.
#[derive(Debug, Clone, Default)]
pub struct GazetteerTagger {
    entries: BTreeMap<Vec<String>, String>,
    longest: usize,
}

impl GazetteerTagger {
    /// The first type seen for a surface wins.
    pub fn train(sentences: &[TaggedSentence]) -> Self {
        let mut g = GazetteerTagger::default();
        for s in sentences {
            let words: Vec<String> = s.words().map(str::to_lowercase).collect();
            for span in s.spans() {
                let key = words[span.start..=span.end].to_vec();
                g.longest = g.longest.max(key.len());
                g.entries.entry(key).or_insert(span.entity_type);
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tag(&self, sentence: &TaggedSentence) -> Vec<Tag> {
        let words: Vec<String> = sentence.words().map(str::to_lowercase).collect();
        let mut tags = vec![Tag::Outside; words.len()];
        let mut i = 0;
        while i < words.len() {
            let max = self.longest.min(words.len() - i);
            let hit = (1..=max)
                .rev()
                .find_map(|n| self.entries.get(&words[i..i + n]).map(|t| (n, t)));
            match hit {
                Some((n, ty)) => {
                    tags[i] = Tag::begin(ty.clone());
                    for t in &mut tags[i + 1..i + n] {
                        *t = Tag::inside(ty.clone());
                    }
                    i += n;
                }
                None => i += 1,
            }
        }
        tags
    }
}

fn token_set(s: &str) -> HashSet<String> {
    s.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '@' && c != '$')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// 1-nearest-neighbour relation classifier over word-set Jaccard; ties go
/// to the earliest training example, and an empty training set predicts No.
#[derive(Debug, Clone, Default)]
pub struct NearestNeighbour {
    examples: Vec<(HashSet<String>, Label)>,
}

impl NearestNeighbour {
    pub fn train(examples: &[ReExample]) -> Self {
        NearestNeighbour {
            examples: examples.iter().map(|e| (token_set(&e.sentence), e.label)).collect(),
        }
    }

    pub fn predict(&self, sentence: &str) -> Label {
        let q = token_set(sentence);
        let mut best: Option<(f64, Label)> = None;
        for (set, label) in &self.examples {
            let union = q.union(set).count();
            let sim = if union == 0 {
                1.0
            } else {
                q.intersection(set).count() as f64 / union as f64
            };
            if best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, *label));
            }
        }
        best.map_or(Label::No, |(_, l)| l)
    }
}
