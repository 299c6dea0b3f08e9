use clinsynth::corpus::{Tag, TaggedSentence};
use clinsynth::scorer::{
    aggregate_trials, align_predictions, cls_prf, curve_tsv, learning_curve, read_predictions, span_prf, trials_tsv,
    write_predictions, Metrics, Prediction, ScoreError, SweepGrid,
};
use proptest::prelude::*;

/// Independent span reader: scans raw tags, opening a span at every B and
/// at every I that does not continue a same-typed run.
fn oracle_spans(tags: &[Tag]) -> Vec<(usize, usize, String)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        let ty = match &tags[i] {
            Tag::Outside => {
                i += 1;
                continue;
            }
            Tag::Begin(t) | Tag::Inside(t) => t.clone(),
        };
        let start = i;
        i += 1;
        while i < tags.len() && tags[i] == Tag::Inside(ty.clone()) {
            i += 1;
        }
        spans.push((start, i - 1, ty));
    }
    spans
}

fn oracle(gold: &[Vec<Tag>], pred: &[Vec<Tag>]) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gs = oracle_spans(g);
        let ps = oracle_spans(p);
        let hits = ps.iter().filter(|s| gs.contains(s)).count() as u64;
        tp += hits;
        fp += ps.len() as u64 - hits;
        fn_ += gs.len() as u64 - hits;
    }
    (tp, fp, fn_)
}

fn tag() -> impl Strategy<Value = Tag> {
    prop_oneof![
        3 => Just(Tag::Outside),
        1 => prop::sample::select(vec!["Disease", "Gene", "Chem"]).prop_map(Tag::begin),
        1 => prop::sample::select(vec!["Disease", "Gene", "Chem"]).prop_map(Tag::inside),
    ]
}

/// Gold/pred pairs of equal shape; predictions may hold orphan I tags.
fn corpus() -> impl Strategy<Value = Vec<(Vec<Tag>, Vec<Tag>)>> {
    prop::collection::vec(
        (0usize..12).prop_flat_map(|n| (prop::collection::vec(tag(), n), prop::collection::vec(tag(), n))),
        0..=10,
    )
}

fn sentences(tags: &[Vec<Tag>]) -> Vec<TaggedSentence> {
    tags.iter()
        .map(|t| {
            let words: Vec<String> = (0..t.len()).map(|i| format!("w{i}")).collect();
            TaggedSentence::new(words, clinsynth::corpus::repair_iob(t)).unwrap()
        })
        .collect()
}

fn metrics() -> impl Strategy<Value = Metrics> {
    (0u64..50, 0u64..50, 0u64..50).prop_map(|(a, b, c)| Metrics::from_counts(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn span_prf_matches_oracle(c in corpus()) {
        let (gold, pred): (Vec<_>, Vec<_>) = c.into_iter().unzip();
        let m = span_prf(&sentences(&gold), &pred).unwrap();
        prop_assert_eq!((m.tp, m.fp, m.fn_), oracle(&gold, &pred));
    }

    #[test]
    fn swapping_sides_exchanges_p_and_r(c in corpus()) {
        let (gold, pred): (Vec<_>, Vec<_>) = c.into_iter().unzip();
        let a = span_prf(&sentences(&gold), &pred).unwrap();
        let b = span_prf(&sentences(&pred), &gold).unwrap();
        prop_assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fn_, b.fp));
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
    }

    #[test]
    fn f1_is_harmonic_mean(m in metrics()) {
        let recomputed = if m.precision + m.recall == 0.0 { 0.0 } else { 2.0 * m.precision * m.recall / (m.precision + m.recall) };
        prop_assert!((recomputed - m.f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.f1));
    }

    #[test]
    fn copies_aggregate_to_themselves(m in metrics(), n in 1usize..8) {
        let s = aggregate_trials(&vec![m; n]).unwrap();
        prop_assert_eq!(s.f1.mean, m.f1);
        prop_assert_eq!(s.precision.mean, m.precision);
        prop_assert_eq!(s.f1.std, 0.0);
    }
}

#[test]
fn identity_prediction_is_perfect() {
    let gold = sentences(&[Tag::parse_sequence("O B-Disease I-Disease O B-Gene").unwrap()]);
    let pred = vec![gold[0].tags().to_vec()];
    let m = span_prf(&gold, &pred).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    assert!(matches!(
        span_prf(&gold, &[]),
        Err(ScoreError::LengthMismatch { gold: 1, pred: 0 })
    ));
    assert_eq!(cls_prf(&[], &[]).unwrap().f1, 0.0);
}

#[test]
fn paper_sweep_grids() {
    let per_entity: SweepGrid = "1,2,3,4,5,10,15,20,25,30".parse().unwrap();
    let sizes: SweepGrid = "400..6400 step 400".parse().unwrap();
    assert_eq!(per_entity.values().len(), 10);
    assert_eq!(sizes.values().len(), 16);
    assert_eq!(sizes.values().first(), Some(&400));
    assert_eq!(sizes.values().last(), Some(&6400));
    let empty: SweepGrid = "".parse().unwrap();
    assert!(learning_curve(&empty, 3, |_| Ok::<_, String>(Metrics::from_counts(1, 0, 0))).is_empty());
    assert!("5..1".parse::<SweepGrid>().is_err());
    assert!("1..5 step 0".parse::<SweepGrid>().is_err());
    assert!("1,x".parse::<SweepGrid>().is_err());
}

#[test]
fn failing_trials_do_not_abort_the_sweep() {
    let grid: SweepGrid = "10,20,30".parse().unwrap();
    let points = learning_curve(&grid, 3, |spec| {
        if spec.x == 20 || (spec.x == 30 && spec.trial == 1) {
            Err(format!("trainer crashed at {}", spec.x))
        } else {
            Ok(Metrics::from_counts(spec.x, 10, 10))
        }
    });
    assert_eq!(points.len(), 3);
    assert!(points[1].summary.is_none());
    assert_eq!(points[1].errors.len(), 3);
    assert_eq!(points[2].succeeded, vec![0, 2]);
    let tsv = curve_tsv(&points);
    assert_eq!(tsv.lines().count(), 4);
    assert!(tsv.lines().nth(2).unwrap().starts_with("20\t0\t3\t"));
    let raw = trials_tsv(&points);
    assert_eq!(raw.lines().count(), 1 + 3 + 2);
    assert!(raw.lines().last().unwrap().starts_with("30\t2\t30\t10\t10\t"));
}

#[test]
fn prediction_files() {
    let preds = vec![
        Prediction::ner(1, Tag::parse_sequence("O B-Disease").unwrap()),
        Prediction::ner(0, vec![Tag::Outside]),
    ];
    let text = write_predictions(&preds);
    assert_eq!(text.lines().next().unwrap(), r#"{"id":1,"tags":["O","B-Disease"]}"#);
    let back = read_predictions(&text).unwrap();
    let aligned = align_predictions(back, 2).unwrap();
    assert_eq!(aligned[0].id, 0);

    assert!(matches!(
        align_predictions(preds.clone(), 3),
        Err(ScoreError::MissingPrediction(2))
    ));
    assert!(matches!(
        align_predictions(vec![preds[0].clone(), preds[0].clone()], 2),
        Err(ScoreError::DuplicatePrediction(1))
    ));
    assert!(matches!(
        align_predictions(preds, 1),
        Err(ScoreError::UnknownItem { id: 1, items: 1 })
    ));
    assert!(matches!(
        read_predictions("{\"id\":0}\n"),
        Err(ScoreError::BadPrediction { line: 1, .. })
    ));
    assert!(matches!(
        read_predictions("{\"id\":0,\"tags\":[\"X-Y\"]}"),
        Err(ScoreError::BadPrediction { line: 1, .. })
    ));
    let re = read_predictions("{\"id\":0,\"label\":\"Yes\",\"raw_reply\":\"Yes.\"}").unwrap();
    assert_eq!(re[0].label, Some(clinsynth::corpus::Label::Yes));
}
