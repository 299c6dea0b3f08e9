//! Distribution shift between original and synthetic corpora: n-gram
//! Jensen-Shannon divergence, vocabulary overlap, and a 2-D PCA projection
//! of sentence vectors for scatter plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Source};
use crate::quality_gate::{exact_overlap_rate, normalize};
use crate::ErrorClass;

/// Dimension of the built-in hashed bag-of-words vectors.
pub const HASH_DIM: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShiftError {
    #[error("corpus {0} has no tokens to compare")]
    EmptyCorpus(&'static str),
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("need at least 2 vectors to project, got {0}")]
    TooFewVectors(usize),
    #[error("embedding line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

impl ErrorClass for ShiftError {
    fn class(&self) -> &'static str {
        match self {
            ShiftError::EmptyCorpus(_) => "EmptyCorpus",
            ShiftError::DimensionMismatch { .. } => "DimensionMismatch",
            ShiftError::TooFewVectors(_) => "EmptyInput",
            ShiftError::Parse { .. } => "ParseError",
            ShiftError::Io(_) => "IoError",
        }
    }
}

/// Normalized tokens of one sentence: NFC, lowercase, whitespace collapsed,
/// punctuation split off.
pub fn sentence_tokens(text: &str) -> Vec<String> {
    tokenize(&normalize(text)).into_iter().map(|t| t.text).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusStats {
    sentences: Vec<Vec<String>>,
    pub vocab: BTreeMap<String, u64>,
    pub length_histogram: BTreeMap<usize, u64>,
}

impl CorpusStats {
    pub fn new<S: AsRef<str>>(texts: &[S]) -> Self {
        let mut stats = CorpusStats::default();
        for t in texts {
            let toks = sentence_tokens(t.as_ref());
            for tok in &toks {
                *stats.vocab.entry(tok.clone()).or_default() += 1;
            }
            *stats.length_histogram.entry(toks.len()).or_default() += 1;
            stats.sentences.push(toks);
        }
        stats
    }

    /// Relative frequencies of within-sentence n-grams. Tokens carry no
    /// whitespace, so the space-joined key is unambiguous. Empty when no
    /// sentence has n tokens.
    pub fn ngram_dist(&self, n: usize) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        if n > 0 {
            for s in &self.sentences {
                for w in s.windows(n) {
                    *counts.entry(w.join(" ")).or_default() += 1;
                }
            }
        }
        let total: u64 = counts.values().sum();
        counts.into_iter().map(|(k, c)| (k, c as f64 / total as f64)).collect()
    }

    pub fn types(&self) -> BTreeSet<&str> {
        self.vocab.keys().map(String::as_str).collect()
    }

    pub fn mean_length(&self) -> f64 {
        if self.sentences.is_empty() {
            return 0.0;
        }
        self.sentences.iter().map(Vec::len).sum::<usize>() as f64 / self.sentences.len() as f64
    }
}

/// Base-2 Jensen-Shannon divergence between two distributions; in [0, 1].
pub fn js_divergence(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let keys: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let half_kl = |a: f64, m: f64| if a > 0.0 { 0.5 * a * (a / m).log2() } else { 0.0 };
    let mut total = 0.0;
    for k in keys {
        let a = p.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        let m = 0.5 * (a + b);
        // summing both halves per key keeps the result exactly symmetric
        total += half_kl(a, m) + half_kl(b, m);
    }
    total.clamp(0.0, 1.0)
}

pub fn ngram_js_divergence<S: AsRef<str>>(a: &[S], b: &[S], n: usize) -> Result<f64, ShiftError> {
    let p = CorpusStats::new(a).ngram_dist(n);
    let q = CorpusStats::new(b).ngram_dist(n);
    if p.is_empty() {
        return Err(ShiftError::EmptyCorpus("a"));
    }
    if q.is_empty() {
        return Err(ShiftError::EmptyCorpus("b"));
    }
    Ok(js_divergence(&p, &q))
}

/// Jaccard of the two token-type sets.
pub fn vocab_overlap<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64, ShiftError> {
    let (sa, sb) = (CorpusStats::new(a), CorpusStats::new(b));
    let (ta, tb) = (sa.types(), sb.types());
    if ta.is_empty() {
        return Err(ShiftError::EmptyCorpus("a"));
    }
    if tb.is_empty() {
        return Err(ShiftError::EmptyCorpus("b"));
    }
    Ok(ta.intersection(&tb).count() as f64 / ta.union(&tb).count() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub original_sentences: usize,
    pub synthetic_sentences: usize,
    pub jsd_unigram: f64,
    pub jsd_bigram: f64,
    pub vocab_overlap: f64,
    pub mean_length_original: f64,
    pub mean_length_synthetic: f64,
    /// Share of synthetic sentences whose normalized text occurs verbatim
    /// in the original corpus.
    pub exact_overlap_rate: f64,
}

pub fn shift_report(original: &[String], synthetic: &[String]) -> Result<ShiftReport, ShiftError> {
    Ok(ShiftReport {
        original_sentences: original.len(),
        synthetic_sentences: synthetic.len(),
        jsd_unigram: ngram_js_divergence(original, synthetic, 1)?,
        jsd_bigram: ngram_js_divergence(original, synthetic, 2)?,
        vocab_overlap: vocab_overlap(original, synthetic)?,
        mean_length_original: CorpusStats::new(original).mean_length(),
        mean_length_synthetic: CorpusStats::new(synthetic).mean_length(),
        exact_overlap_rate: exact_overlap_rate(synthetic, original),
    })
}

impl ShiftReport {
    pub fn table(&self) -> String {
        let rows = [
            ("original_sentences", self.original_sentences.to_string()),
            ("synthetic_sentences", self.synthetic_sentences.to_string()),
            ("jsd_unigram", format!("{:.6}", self.jsd_unigram)),
            ("jsd_bigram", format!("{:.6}", self.jsd_bigram)),
            ("vocab_overlap", format!("{:.6}", self.vocab_overlap)),
            ("mean_length_original", format!("{:.3}", self.mean_length_original)),
            ("mean_length_synthetic", format!("{:.3}", self.mean_length_synthetic)),
            ("exact_overlap_rate", format!("{:.6}", self.exact_overlap_rate)),
        ];
        let mut out = String::from("statistic\tvalue\n");
        for (k, v) in rows {
            writeln!(out, "{k}\t{v}").unwrap();
        }
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Bag of normalized tokens hashed (FNV-1a) into [`HASH_DIM`] buckets,
/// L2-normalized. A sentence without tokens maps to the zero vector.
pub fn hashed_bow(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; HASH_DIM];
    for tok in sentence_tokens(text) {
        v[(fnv1a(tok.as_bytes()) % HASH_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub id: String,
    pub source: Source,
    pub vector: Vec<f64>,
}

/// Reads `id<TAB>v1,v2,...` lines; blank lines are skipped.
pub fn parse_embeddings(text: &str, source: Source) -> Result<Vec<LabeledVector>, ShiftError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ShiftError::Parse { line: i + 1, message };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| err("missing tab after id".into()))?;
        let vector = values
            .split(',')
            .map(|v| {
                let x: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("not a number: {:?}", v.trim())))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(err(format!("non-finite value {x}")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(LabeledVector {
            id: id.to_string(),
            source,
            vector,
        });
    }
    Ok(out)
}

pub fn write_embeddings(vectors: &[LabeledVector]) -> String {
    let mut out = String::new();
    for v in vectors {
        let vals: Vec<String> = v.vector.iter().map(f64::to_string).collect();
        writeln!(out, "{}\t{}", v.id, vals.join(",")).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x: f64,
    pub y: f64,
    pub source: Source,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSet {
    pub points: Vec<ProjectedPoint>,
    /// Variance captured by each component, descending.
    pub explained_variance: [f64; 2],
    /// All input vectors were identical; every point sits at the origin.
    pub degenerate: bool,
}

/// Mean-centered PCA onto the top two covariance eigenvectors. Each
/// component's sign is chosen so its largest-magnitude coordinate is
/// positive (first such coordinate on ties).
pub fn pca_project(vectors: &[LabeledVector]) -> Result<ProjectionSet, ShiftError> {
    if vectors.len() < 2 {
        return Err(ShiftError::TooFewVectors(vectors.len()));
    }
    let dim = vectors[0].vector.len();
    for (index, v) in vectors.iter().enumerate() {
        if v.vector.len() != dim || dim < 2 {
            return Err(ShiftError::DimensionMismatch {
                index,
                expected: dim.max(2),
                found: v.vector.len(),
            });
        }
    }
    let n = vectors.len();
    let data = DMatrix::from_fn(n, dim, |r, c| vectors[r].vector[c]);
    let mean = data.row_mean();
    let mut centered = data;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let degenerate = centered.iter().all(|x| *x == 0.0);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components: Vec<Vec<f64>> = order[..2]
        .iter()
        .map(|&k| {
            let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = col
                .iter()
                .enumerate()
                .fold(0, |best, (i, x)| if x.abs() > col[best].abs() { i } else { best });
            let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
            col.into_iter().map(|x| x * sign).collect()
        })
        .collect();
    let project = |row: usize, comp: &[f64]| -> f64 {
        if degenerate {
            return 0.0;
        }
        centered.row(row).iter().zip(comp).map(|(a, b)| a * b).sum()
    };
    let points = vectors
        .iter()
        .enumerate()
        .map(|(r, v)| ProjectedPoint {
            x: project(r, &components[0]),
            y: project(r, &components[1]),
            source: v.source,
            id: v.id.clone(),
        })
        .collect();
    let explained = |k: usize| {
        if degenerate {
            0.0
        } else {
            eig.eigenvalues[order[k]].max(0.0)
        }
    };
    Ok(ProjectionSet {
        points,
        explained_variance: [explained(0), explained(1)],
        degenerate,
    })
}

pub fn scatter_tsv(set: &ProjectionSet) -> String {
    let mut out = String::from("x\ty\tsource\tid\n");
    for p in &set.points {
        let source = match p.source {
            Source::Original => "original",
            Source::Synthetic => "synthetic",
        };
        writeln!(out, "{}\t{}\t{source}\t{}", p.x, p.y, p.id).unwrap();
    }
    out
}

pub fn export_scatter(set: &ProjectionSet, path: impl AsRef<Path>) -> Result<(), ShiftError> {
    std::fs::write(path.as_ref(), scatter_tsv(set))
        .map_err(|e| ShiftError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(id: usize, v: &[f64]) -> LabeledVector {
        LabeledVector {
            id: id.to_string(),
            source: Source::Original,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn jsd_fixtures() {
        assert!(ngram_js_divergence(&["a b c"], &["a b c"], 1).unwrap().abs() < 1e-9);
        assert!((ngram_js_divergence(&["a b"], &["c d"], 1).unwrap() - 1.0).abs() < 1e-9);
        assert!((ngram_js_divergence(&["a b"], &["a c"], 1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            ngram_js_divergence(&["a"], &["a b"], 2),
            Err(ShiftError::EmptyCorpus("a"))
        );
        let empty: [&str; 0] = [];
        assert_eq!(
            ngram_js_divergence(&["a"], &empty, 1),
            Err(ShiftError::EmptyCorpus("b"))
        );
    }

    #[test]
    fn overlap_fixtures() {
        assert_eq!(vocab_overlap(&["a b c"], &["b c d"]).unwrap(), 0.5);
        assert_eq!(vocab_overlap(&["a b"], &["a b"]).unwrap(), 1.0);
        assert_eq!(vocab_overlap(&["a b"], &["c"]).unwrap(), 0.0);
    }

    #[test]
    fn distributions_sum_to_one() {
        let s = CorpusStats::new(&["Gout is painful.", "BRCA1 mutations cause breast cancer ."]);
        for n in 1..=3 {
            let total: f64 = s.ngram_dist(n).values().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert_eq!(s.length_histogram.values().sum::<u64>(), 2);
    }

    #[test]
    fn pca_axis_aligned_2d_is_centered_identity() {
        let pts = [[0.0, 0.0], [4.0, 1.0], [8.0, 0.0], [4.0, -1.0]];
        let vs: Vec<_> = pts.iter().enumerate().map(|(i, p)| lv(i, p)).collect();
        let set = pca_project(&vs).unwrap();
        for (p, q) in set.points.iter().zip(pts) {
            assert!((p.x - (q[0] - 4.0)).abs() < 1e-9);
            assert!((p.y - q[1]).abs() < 1e-9);
        }
        assert!(set.explained_variance[0] >= set.explained_variance[1]);
    }

    #[test]
    fn pca_line_and_degenerate() {
        let vs: Vec<_> = (0..6)
            .map(|i| {
                let t = i as f64 - 1.5;
                lv(i, &[1.0 + 2.0 * t, -3.0 + t, 0.5 - 4.0 * t])
            })
            .collect();
        let set = pca_project(&vs).unwrap();
        assert!(set.points.iter().all(|p| p.y.abs() < 1e-9));
        assert!(!set.degenerate);

        let same: Vec<_> = (0..3).map(|i| lv(i, &[1.0, 2.0, 3.0])).collect();
        let set = pca_project(&same).unwrap();
        assert!(set.degenerate);
        assert!(set.points.iter().all(|p| p.x == 0.0 && p.y == 0.0));

        assert!(matches!(
            pca_project(&[lv(0, &[1.0, 2.0]), lv(1, &[1.0])]),
            Err(ShiftError::DimensionMismatch { index: 1, .. })
        ));
        assert_eq!(pca_project(&[lv(0, &[1.0, 2.0])]), Err(ShiftError::TooFewVectors(1)));
    }

    #[test]
    fn embeddings_round_trip_and_scatter() {
        let text = "s1\t0.5,-1,2\n\ns2\t1e-3,0,0\n";
        let vs = parse_embeddings(text, Source::Synthetic).unwrap();
        assert_eq!(vs.len(), 2);
        assert_eq!(parse_embeddings(&write_embeddings(&vs), Source::Synthetic).unwrap(), vs);
        assert!(matches!(
            parse_embeddings("x\t1,abc", Source::Original),
            Err(ShiftError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_embeddings("x 1,2", Source::Original),
            Err(ShiftError::Parse { line: 1, .. })
        ));

        let empty = ProjectionSet {
            points: vec![],
            explained_variance: [0.0; 2],
            degenerate: false,
        };
        assert_eq!(scatter_tsv(&empty), "x\ty\tsource\tid\n");
    }

    #[test]
    fn hashed_bow_is_unit_length() {
        let v = hashed_bow("BRCA1 mutations cause breast cancer.");
        assert_eq!(v.len(), HASH_DIM);
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(v, hashed_bow("brca1   MUTATIONS cause breast cancer."));
        assert!(hashed_bow("").iter().all(|x| *x == 0.0));
    }
}
