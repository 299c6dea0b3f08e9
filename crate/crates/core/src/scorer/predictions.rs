//! Prediction files: one JSON object per line, `{"id": 3, "tags": [...]}`
//! for NER or `{"id": 3, "label": "Yes"}` for RE. `id` is the 0-based item
//! position in the gold file. Extra fields are ignored, so bench run files
//! are valid prediction files.

use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::corpus::{Label, Tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<Tag>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl Prediction {
    pub fn ner(id: usize, tags: Vec<Tag>) -> Self {
        Prediction {
            id,
            tags: Some(tags),
            label: None,
        }
    }

    pub fn re(id: usize, label: Label) -> Self {
        Prediction {
            id,
            tags: None,
            label: Some(label),
        }
    }
}

pub fn read_predictions(text: &str) -> Result<Vec<Prediction>, ScoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let p: Prediction = serde_json::from_str(l).map_err(|e| ScoreError::BadPrediction {
                line: i + 1,
                message: e.to_string(),
            })?;
            if p.tags.is_some() == p.label.is_some() {
                return Err(ScoreError::BadPrediction {
                    line: i + 1,
                    message: "expected exactly one of \"tags\" or \"label\"".into(),
                });
            }
            Ok(p)
        })
        .collect()
}

pub fn write_predictions(preds: &[Prediction]) -> String {
    preds
        .iter()
        .map(|p| serde_json::to_string(p).expect("prediction serializes") + "\n")
        .collect()
}

/// Orders predictions by id into a dense vector of length `items`; every
/// item must be predicted exactly once.
pub fn align_predictions(preds: Vec<Prediction>, items: usize) -> Result<Vec<Prediction>, ScoreError> {
    let mut slots: Vec<Option<Prediction>> = vec![None; items];
    for p in preds {
        let slot = slots.get_mut(p.id).ok_or(ScoreError::UnknownItem { id: p.id, items })?;
        if slot.is_some() {
            return Err(ScoreError::DuplicatePrediction(p.id));
        }
        *slot = Some(p);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or(ScoreError::MissingPrediction(i)))
        .collect()
}
