use std::collections::HashSet;

use clinsynth::corpus::{Label, ReExample, Source, Tag, TaggedSentence};
use clinsynth::generator::{CandidateSample, Payload};
use clinsynth::quality_gate::{
    dedup_texts, filter_valid, jaccard, normalize, run_gate, shingles, GateConfig, GateReject,
};
use proptest::prelude::*;

/// All-pairs reference for `dedup_texts`: returns kept input indices.
fn oracle(texts: &[String], cfg: &GateConfig) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, t) in texts.iter().enumerate() {
        let n = normalize(t);
        let sh = shingles(&n, cfg.shingle_size);
        let dup = kept.iter().any(|&k| {
            let nk = normalize(&texts[k]);
            nk == n || jaccard(&sh, &shingles(&nk, cfg.shingle_size)) >= cfg.jaccard_threshold
        });
        if !dup {
            kept.push(i);
        }
    }
    kept
}

fn kept_indices(texts: &[String], cfg: &GateConfig) -> Vec<usize> {
    dedup_texts(texts, cfg)
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_none())
        .map(|(i, _)| i)
        .collect()
}

/// Small vocabulary so duplicates and near duplicates are common.
fn corpus() -> impl Strategy<Value = Vec<String>> {
    let word = prop::sample::select(vec!["a", "b", "c", "d", "E", "f", "gene", "  "]);
    prop::collection::vec(prop::collection::vec(word, 0..8).prop_map(|w| w.join(" ")), 0..30)
}

fn threshold() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.8), Just(1.0), Just(0.5), 0.05f64..=1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn index_matches_all_pairs(texts in corpus(), t in threshold(), k in 1usize..4) {
        let cfg = GateConfig { jaccard_threshold: t, shingle_size: k, ..GateConfig::default() };
        prop_assert_eq!(kept_indices(&texts, &cfg), oracle(&texts, &cfg));
    }

    #[test]
    fn dedup_is_idempotent_and_exact_unique(texts in corpus(), t in threshold()) {
        let cfg = GateConfig { jaccard_threshold: t, ..GateConfig::default() };
        let kept: Vec<String> = kept_indices(&texts, &cfg).into_iter().map(|i| texts[i].clone()).collect();
        prop_assert!(dedup_texts(&kept, &cfg).iter().all(Option::is_none));
        let norms: HashSet<String> = kept.iter().map(|t| normalize(t)).collect();
        prop_assert_eq!(norms.len(), kept.len());
    }

    #[test]
    fn permuting_rejected_exact_dups_keeps_contents(texts in corpus(), seed in any::<u64>()) {
        let cfg = GateConfig::default();
        let decisions = dedup_texts(&texts, &cfg);
        let slots: Vec<usize> = (0..texts.len())
            .filter(|&i| matches!(decisions[i], Some(GateReject::ExactDup { .. })))
            .collect();
        let mut order = slots.clone();
        // deterministic shuffle from the seed
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut permuted = texts.clone();
        for (slot, from) in slots.iter().zip(&order) {
            permuted[*slot] = texts[*from].clone();
        }
        let contents = |ts: &[String]| -> HashSet<String> {
            kept_indices(ts, &cfg).into_iter().map(|i| normalize(&ts[i])).collect()
        };
        prop_assert_eq!(contents(&texts), contents(&permuted));
    }

    #[test]
    fn gate_report_reconciles(texts in corpus(), t in threshold(), min in 0usize..4) {
        let samples: Vec<CandidateSample> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| sample(Payload::Re(ReExample::new(format!("@GENE$ {t} @DISEASE$"), Label::Yes, Source::Synthetic)), i))
            .collect();
        let cfg = GateConfig { jaccard_threshold: t, min_tokens: min, ..GateConfig::default() };
        let out = run_gate(&samples, &cfg).unwrap();
        prop_assert!(out.report.reconciles());
        prop_assert_eq!(out.kept.len() + out.quarantine.len(), samples.len());
    }
}

fn sample(payload: Payload, line: usize) -> CandidateSample {
    CandidateSample {
        payload,
        prompt_id: "p".into(),
        seed_ref: "s".into(),
        round: 1,
        batch: 0,
        line,
        raw_line: String::new(),
    }
}

fn re(sentence: &str) -> CandidateSample {
    sample(Payload::Re(ReExample::new(sentence, Label::Yes, Source::Synthetic)), 1)
}

#[test]
fn gad_positive_row_is_valid() {
    let row = "The study demonstrates that the @GENE$ gene is directly linked to @DISEASE$ development, with patients carrying the C/T variant showing a significantly higher risk.";
    assert_eq!(filter_valid(&re(row), &GateConfig::default()), Ok(()));
    // second GAD row names the gene twice and fails the one-of-each rule
    let twice = "The results of our study suggest that @GENE$ is involved in the etiology of @DISEASE$, and highlight the potential for @GENE$ as a target for the development of new treatments for this debilitating disease.";
    assert!(matches!(
        filter_valid(&re(twice), &GateConfig::default()),
        Err(GateReject::PlaceholderCount { count: 2, .. })
    ));
}

#[test]
fn two_disease_markers_rejected() {
    let r = filter_valid(
        &re("@GENE$ variants cause @DISEASE$ and @DISEASE$ in adults."),
        &GateConfig::default(),
    );
    assert_eq!(
        r,
        Err(GateReject::PlaceholderCount {
            placeholder: "@DISEASE$".into(),
            count: 2
        })
    );
}

#[test]
fn length_and_entity_rules() {
    let cfg = GateConfig::default();
    let short = TaggedSentence::new(["Gout", "flares", "."], Tag::parse_sequence("B-Disease O O").unwrap()).unwrap();
    assert_eq!(
        filter_valid(&sample(Payload::Ner(short), 1), &cfg),
        Err(GateReject::TooShort { tokens: 3 })
    );
    let none = TaggedSentence::untagged("No entity appears in this sentence at all.");
    assert_eq!(
        filter_valid(&sample(Payload::Ner(none), 1), &cfg),
        Err(GateReject::NoEntity)
    );
    let orphan = TaggedSentence::new(
        ["We", "saw", "gout", "in", "patients", "."],
        Tag::parse_sequence("O O I-Disease O O O").unwrap(),
    )
    .unwrap();
    assert_eq!(
        filter_valid(&sample(Payload::Ner(orphan), 1), &cfg),
        Err(GateReject::InvalidIob)
    );
}

#[test]
fn invalid_first_copy_does_not_shadow_valid_copy() {
    let cfg = GateConfig::default();
    let bad = re("@GENE$ @GENE$ causes @DISEASE$ in most carriers.");
    let good = re("@GENE$ causes @DISEASE$ in most carriers today.");
    let out = run_gate(&[bad, good.clone(), good], &cfg).unwrap();
    assert_eq!(out.report.kept_count, 1);
    assert_eq!(out.report.invalid_count, 1);
    assert_eq!(out.report.exact_dup_count, 1);
    assert!(out.report.reconciles());
    assert!(matches!(out.quarantine[1].reason, GateReject::ExactDup { of: 1 }));
    assert!(out.quarantine_jsonl().contains("\"reason\":\"ExactDup\""));
}
