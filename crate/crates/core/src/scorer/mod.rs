//! Exact-span NER metrics, binary relation metrics, multi-trial
//! aggregation and learning-curve sweeps.
//!
//! Every ratio with a zero denominator is 0, never NaN.

mod baseline;
mod curve;
mod predictions;

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{spans_from_tags, EntitySpan, Label, Tag, TaggedSentence};
use crate::ErrorClass;

pub use baseline::{GazetteerTagger, NearestNeighbour};
pub use curve::{curve_tsv, learning_curve, trials_tsv, CurvePoint, SweepGrid, TrialError, TrialSpec};
pub use predictions::{align_predictions, read_predictions, write_predictions, Prediction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("sentence {sentence}: gold has {gold} tokens, prediction has {pred}")]
    ShapeMismatch { sentence: usize, gold: usize, pred: usize },
    #[error("gold has {gold} items, prediction has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no trials to aggregate")]
    EmptyInput,
    #[error("prediction line {line}: {message}")]
    BadPrediction { line: usize, message: String },
    #[error("no prediction for item {0}")]
    MissingPrediction(usize),
    #[error("item {0} predicted more than once")]
    DuplicatePrediction(usize),
    #[error("prediction for item {id} but only {items} items")]
    UnknownItem { id: usize, items: usize },
    #[error("invalid sweep grid {spec:?}: {message}")]
    BadGrid { spec: String, message: String },
}

impl ErrorClass for ScoreError {
    fn class(&self) -> &'static str {
        match self {
            ScoreError::ShapeMismatch { .. } => "ShapeMismatch",
            ScoreError::LengthMismatch { .. } => "LengthMismatch",
            ScoreError::EmptyInput => "EmptyInput",
            ScoreError::BadPrediction { .. } => "ParseError",
            ScoreError::MissingPrediction(_) => "MissingPrediction",
            ScoreError::DuplicatePrediction(_) => "DuplicatePrediction",
            ScoreError::UnknownItem { .. } => "UnknownItem",
            ScoreError::BadGrid { .. } => "InvalidConfig",
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn tsv_header() -> &'static str {
        "tp\tfp\tfn\tprecision\trecall\tf1"
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

/// Micro-averaged exact-span metrics: a predicted span counts only when
/// start, end and type all match a gold span of the same sentence.
pub fn span_prf(gold: &[TaggedSentence], pred: &[Vec<Tag>]) -> Result<Metrics, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(ScoreError::ShapeMismatch {
                sentence: i,
                gold: g.len(),
                pred: p.len(),
            });
        }
        let gs: HashSet<EntitySpan> = g.spans().into_iter().collect();
        let ps: HashSet<EntitySpan> = spans_from_tags(p).into_iter().collect();
        let hit = gs.intersection(&ps).count() as u64;
        tp += hit;
        fp += ps.len() as u64 - hit;
        fn_ += gs.len() as u64 - hit;
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

/// Binary metrics with `Yes` as the positive class.
pub fn cls_prf(gold: &[Label], pred: &[Label]) -> Result<Metrics, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (g, p) in gold.iter().zip(pred) {
        match (g, p) {
            (Label::Yes, Label::Yes) => tp += 1,
            (Label::No, Label::Yes) => fp += 1,
            (Label::Yes, Label::No) => fn_ += 1,
            (Label::No, Label::No) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and sample standard deviation (n-1); std is 0 for
    /// a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        // shifted by the first value so n identical trials give exactly
        // that value with std 0
        let v0 = values[0];
        let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / n;
        let std = if values.len() == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: Vec<Metrics>,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

pub fn aggregate_trials(trials: &[Metrics]) -> Result<TrialSummary, ScoreError> {
    let stat = |f: fn(&Metrics) -> f64| MeanStd::of(&trials.iter().map(f).collect::<Vec<_>>());
    Ok(TrialSummary {
        trials: trials.to_vec(),
        precision: stat(|m| m.precision).ok_or(ScoreError::EmptyInput)?,
        recall: stat(|m| m.recall).ok_or(ScoreError::EmptyInput)?,
        f1: stat(|m| m.f1).ok_or(ScoreError::EmptyInput)?,
    })
}

/// One-row metrics report: a header line and a data line.
pub fn metrics_tsv(label: &str, m: &Metrics) -> String {
    let mut out = String::new();
    writeln!(out, "run\t{}", Metrics::tsv_header()).unwrap();
    writeln!(out, "{label}\t{}", m.tsv_row()).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        let m = Metrics::from_counts(2, 1, 1);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(Metrics::from_counts(0, 0, 0).f1, 0.0);
        assert_eq!(Metrics::from_counts(0, 3, 0).recall, 0.0);
        assert_eq!(Metrics::from_counts(0, 0, 3).precision, 0.0);
    }

    #[test]
    fn classification() {
        use Label::{No, Yes};
        let m = cls_prf(&[Yes, Yes, No, No], &[Yes, No, Yes, No]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 1));
        assert_eq!(m.f1, 0.5);
        let m = cls_prf(&[Yes, Yes], &[No, No]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(matches!(cls_prf(&[Yes], &[]), Err(ScoreError::LengthMismatch { .. })));
    }

    #[test]
    fn boundary_miss_is_fp_and_fn() {
        let gold = TaggedSentence::new(
            ["case", "of", "rheumatoid", "arthritis"],
            Tag::parse_sequence("O O B-Disease I-Disease").unwrap(),
        )
        .unwrap();
        let pred = Tag::parse_sequence("O O B-Disease O").unwrap();
        let m = span_prf(std::slice::from_ref(&gold), &[pred]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.f1), (0, 1, 1, 0.0));
        assert!(matches!(
            span_prf(&[gold], &[vec![Tag::Outside]]),
            Err(ScoreError::ShapeMismatch {
                sentence: 0,
                gold: 4,
                pred: 1
            })
        ));
    }

    #[test]
    fn aggregation() {
        let f = |v: f64| Metrics {
            f1: v,
            ..Metrics::from_counts(0, 0, 0)
        };
        let s = aggregate_trials(&[f(0.7), f(0.9)]).unwrap();
        assert!((s.f1.mean - 0.8).abs() < 1e-12);
        assert!((s.f1.std - 0.02f64.sqrt()).abs() < 1e-12);
        let s = aggregate_trials(&[f(0.8); 3]).unwrap();
        assert_eq!(s.f1.std, 0.0);
        assert_eq!(aggregate_trials(&[f(0.3)]).unwrap().f1.std, 0.0);
        assert_eq!(aggregate_trials(&[]), Err(ScoreError::EmptyInput));
    }
}
