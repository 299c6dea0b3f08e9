use clinsynth::corpus::{
    tokenize, validate_iob, Dataset, IobMode, Label, ReExample, Source, Tag, TaggedSentence, Token,
};
use clinsynth::llm_gateway::{Gateway, MockProvider};
use clinsynth::prompt_forge::{builtin, PromptTask};
use clinsynth::zeroshot_bench::{parse_iob_reply, realign, run_bench, score_replies, BenchConfig, LabelReply};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Golden {
    kind: String,
    gold: String,
    reply: String,
    expect: String,
    note: String,
}

fn golden() -> Vec<Golden> {
    include_str!("fixtures/noisy_replies.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn disease() -> Vec<String> {
    vec!["Disease".to_string()]
}

#[test]
fn noisy_ner_replies_realign_as_expected() {
    let rows: Vec<Golden> = golden().into_iter().filter(|g| g.kind == "ner").collect();
    assert_eq!(rows.len(), 30);
    let data = Dataset::ner(rows.iter().map(|g| TaggedSentence::untagged(&g.gold)).collect());
    let replies = rows.iter().map(|g| g.reply.clone()).collect();
    let run = score_replies(data, &builtin::template(PromptTask::NerZeroshot), replies, &disease()).unwrap();
    for (g, r) in rows.iter().zip(&run.records) {
        let tags = r.tags.as_ref().unwrap();
        assert_eq!(tags.len(), tokenize(&g.gold).len(), "{}", g.note);
        assert!(validate_iob(tags, IobMode::Strict).is_ok(), "{}", g.note);
        assert_eq!(tags, &Tag::parse_sequence(&g.expect).unwrap(), "{}", g.note);
    }
    // refusals, the empty reply and the JSON object yield nothing usable
    assert_eq!(run.failures(), 4);
    assert_eq!(run.predictions().len(), 30);
}

#[test]
fn noisy_re_replies_and_invalid_rate() {
    let rows: Vec<Golden> = golden().into_iter().filter(|g| g.kind == "re").collect();
    assert_eq!(rows.len(), 20);
    let data = Dataset::re(
        rows.iter()
            .map(|g| ReExample::new(&g.gold, Label::Yes, Source::Original))
            .collect(),
    );
    let replies = rows.iter().map(|g| g.reply.clone()).collect();
    let run = score_replies(data, &builtin::template(PromptTask::ReZeroshot), replies, &[]).unwrap();
    for (g, r) in rows.iter().zip(&run.records) {
        let expected = match g.expect.as_str() {
            "Yes" => LabelReply::Yes,
            "No" => LabelReply::No,
            _ => LabelReply::Invalid,
        };
        assert_eq!(r.verdict, Some(expected), "{}", g.note);
    }
    let planted = rows.iter().filter(|g| g.expect == "Invalid").count();
    assert_eq!(run.invalid_rate(), planted as f64 / rows.len() as f64);
    assert_eq!(run.invalid_rate(), 0.3);
    // invalid replies are scored as No against all-Yes gold
    let m = run.metrics().unwrap();
    assert_eq!((m.tp, m.fp, m.fn_), (7, 0, 13));
}

#[test]
fn bench_jsonl_is_a_prediction_file() {
    let rows: Vec<Golden> = golden().into_iter().filter(|g| g.kind == "ner").take(5).collect();
    let data = Dataset::ner(rows.iter().map(|g| TaggedSentence::untagged(&g.gold)).collect());
    let run = score_replies(
        data,
        &builtin::template(PromptTask::NerZeroshot),
        rows.iter().map(|g| g.reply.clone()).collect(),
        &disease(),
    )
    .unwrap();
    let preds = clinsynth::scorer::read_predictions(&run.to_jsonl()).unwrap();
    assert_eq!(preds, run.predictions());
}

#[test]
fn mocked_bench_issues_one_call_per_item_then_hits_cache() {
    let dir = tempfile::tempdir().unwrap();
    let gold: Vec<TaggedSentence> = [
        ("Gout flares were common in older patients .", "B-Disease O O O O O O O"),
        (
            "Mutations in APC cause familial adenomatous polyposis .",
            "O O O O B-Disease I-Disease I-Disease O",
        ),
        ("No disease was observed in the cohort .", "O O O O O O O O"),
    ]
    .iter()
    .map(|(t, g)| TaggedSentence::new(t.split(' '), Tag::parse_sequence(g).unwrap()).unwrap())
    .collect();
    let data = Dataset::ner(gold);
    let gw = Gateway::mock(MockProvider::new(1)).with_cache(dir.path()).unwrap();
    let template = builtin::template(PromptTask::NerZeroshot);
    let cfg = BenchConfig::default();
    let first = run_bench(&gw, &data, &template, &cfg).unwrap();
    assert_eq!(first.records.len(), 3);
    assert!(first.records.iter().all(|r| !r.cached));
    let second = run_bench(&gw, &data, &template, &cfg).unwrap();
    assert!(second.records.iter().all(|r| r.cached));
    assert_eq!(first.predictions(), second.predictions());
    let m = first.metrics().unwrap();
    assert!(m.f1 >= 0.0 && m.f1 <= 1.0);

    let err = run_bench(&gw, &data, &builtin::template(PromptTask::ReZeroshot), &cfg).unwrap_err();
    assert_eq!(clinsynth::ErrorClass::class(&err), "TaskMismatch");
}

#[test]
fn subset_takes_first_items_in_file_order() {
    let data = Dataset::ner(
        ["a b", "c d", "e f"]
            .iter()
            .map(|t| TaggedSentence::untagged(t))
            .collect(),
    );
    let sub = clinsynth::zeroshot_bench::subset(&data, Some(2));
    assert_eq!(sub.texts(), vec!["a b".to_string(), "c d".to_string()]);
    assert_eq!(clinsynth::zeroshot_bench::subset(&data, None).len(), 3);
}

fn tag() -> impl Strategy<Value = Tag> {
    prop_oneof![
        Just(Tag::Outside),
        Just(Tag::begin("Disease")),
        Just(Tag::inside("Disease")),
        Just(Tag::inside("Gene")),
    ]
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["the", "The", "gout", "of", ".", "cancer", "BRCA1", "x"]).prop_map(String::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn realign_length_and_lenient_validity(
        pred in prop::collection::vec((word(), tag()), 0..15),
        gold in prop::collection::vec(word(), 0..15),
    ) {
        let tokens: Vec<Token> = gold.iter().enumerate().map(|(index, w)| Token { text: w.clone(), index }).collect();
        let out = realign(&pred, &tokens);
        prop_assert_eq!(out.len(), tokens.len());
        prop_assert!(validate_iob(&out, IobMode::Strict).is_ok());
    }

    #[test]
    fn parser_accounts_for_every_line(text in "[a-zA-Z\\t |`.\\-\\n]{0,200}") {
        let p = parse_iob_reply(&text, &disease());
        let nonblank = text.lines().filter(|l| !l.trim().is_empty()).count();
        prop_assert_eq!(p.parsed_lines + p.skipped_lines(), nonblank);
    }
}
