use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clinsynth::corpus::Source;
use clinsynth::corpus::{
    parse_conll, parse_re_file, write_conll, write_re_tsv, Dataset, IobMode, Items, Label, Split, Tag, TaggedSentence,
    Task,
};
use clinsynth::generator::{
    extract_seed_entities, gen_ner_all, gen_re_run, BatchResult, GenerationSampler, Payload, SeedPool,
};
use clinsynth::prompt_forge::{builtin, CandidateSampler, Forge, ForgeStore, PromptTask, PromptTemplate, RoundStatus};
use clinsynth::quality_gate::run_gate;
use clinsynth::scorer::{
    align_predictions, cls_prf, curve_tsv, learning_curve, metrics_tsv, read_predictions, span_prf, trials_tsv,
    GazetteerTagger, Metrics, NearestNeighbour, Prediction, TrialSpec,
};
use clinsynth::shift_analyzer::{hashed_bow, parse_embeddings, pca_project, scatter_tsv, shift_report, LabeledVector};
use clinsynth::zeroshot_bench::{run_bench, BenchConfig, BenchSampler};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SweepVariable};
use crate::rundir::{latest_run_with, RunDir};
use crate::CliError;

pub const FORGE_LOG: &str = "refinement.jsonl";
pub const FINAL_PROMPT: &str = "final_prompt.json";
pub const KEPT_SAMPLES: &str = "samples.jsonl";
pub const CORPUS_FILE: &str = "corpus.tsv";

/// Progress output is best effort: a closed stdout (`| head`) must not
/// turn a finished run into a failed one.
fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    let _ = writeln!(out, "{}", text.as_ref());
    Ok(())
}

fn load(config: &Path) -> Result<RunConfig, CliError> {
    RunConfig::load(config)
}

/// Runs `body` inside a fresh run directory; the manifest records "ok" or
/// "failed" either way.
fn in_run<F>(cfg: &RunConfig, command: &str, out: &mut dyn Write, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut RunDir, &mut dyn Write) -> Result<(), CliError>,
{
    let mut rd = RunDir::create(&cfg.output_dir, command, &cfg.hash(), &cfg.doc.canonical())?;
    rd.add_input(&cfg.path)?;
    rd.add_input(&cfg.dataset)?;
    for path in cfg.manifest.paths.values() {
        rd.add_input(path)?;
    }
    let result = body(&mut rd, out);
    let status = if result.is_ok() { "ok" } else { "failed" };
    let path = rd.finish(status)?;
    result?;
    say(out, format!("run: {}", path.display()))
}

fn load_split(cfg: &RunConfig, rd: &mut RunDir, split: Split) -> Result<Dataset, CliError> {
    let path = cfg
        .manifest
        .path(split)
        .ok_or_else(|| {
            CliError::new(
                "InvalidConfig",
                format!("dataset has no {split} split", split = split.as_str()),
            )
        })?
        .to_path_buf();
    rd.add_input(&path)?;
    Ok(cfg.manifest.load_split(split)?)
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        "seed-pool" => Ok(Split::SeedPool),
        other => Err(CliError::new("InvalidConfig", format!("unknown split {other:?}"))),
    }
}

/// Reads a corpus file in the format of the configured task.
fn read_corpus(task: Task, path: &Path) -> Result<Dataset, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(match task {
        Task::Ner => parse_conll(&bytes)?,
        Task::Re => parse_re_file(&bytes)?,
    })
}

pub fn ingest(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    in_run(&cfg, "ingest", out, |rd, out| {
        let mut summary = String::from(match cfg.task() {
            Task::Ner => "split\titems\tentities\n",
            Task::Re => "split\titems\tyes\tno\n",
        });
        for split in [Split::Train, Split::Test, Split::SeedPool] {
            if cfg.manifest.path(split).is_none() {
                continue;
            }
            let data = load_split(&cfg, rd, split)?;
            data.validate(IobMode::Strict).map_err(|(item, e)| {
                CliError::new(
                    clinsynth::ErrorClass::class(&e),
                    format!("{} item {}: {e}", split.as_str(), item + 1),
                )
            })?;
            let counts = match data.items() {
                Items::Ner(s) => s.iter().map(|s| s.spans().len()).sum::<usize>().to_string(),
                Items::Re(e) => {
                    let yes = e.iter().filter(|e| e.label == Label::Yes).count();
                    format!("{yes}\t{}", e.len() - yes)
                }
            };
            summary.push_str(&format!("{}\t{}\t{counts}\n", split.as_str(), data.len()));
        }
        rd.write("summary.tsv", &summary)?;
        say(out, format!("dataset {} ({})", cfg.manifest.name, cfg.task()))?;
        say(out, summary.trim_end())
    })
}

fn forge_task(cfg: &RunConfig) -> PromptTask {
    match (cfg.task(), cfg.forge.zeroshot) {
        (Task::Ner, false) => PromptTask::NerGen,
        (Task::Re, false) => PromptTask::ReGen,
        (Task::Ner, true) => PromptTask::NerZeroshot,
        (Task::Re, true) => PromptTask::ReZeroshot,
    }
}

fn generation_pool(cfg: &RunConfig) -> Result<SeedPool, CliError> {
    match cfg.task() {
        Task::Ner => {
            let train = cfg.manifest.load_split(Split::Train)?;
            let mut seeds = extract_seed_entities(train.sentences().unwrap_or_default(), cfg.manifest.name);
            if let Some(k) = cfg.generation.entities {
                seeds.truncate(k);
            }
            Ok(SeedPool::ner(seeds)?)
        }
        Task::Re => {
            if cfg.manifest.path(Split::SeedPool).is_some() {
                let pool = cfg.manifest.load_split(Split::SeedPool)?;
                Ok(SeedPool::re(pool.examples().unwrap_or_default().to_vec())?)
            } else {
                let train = cfg.manifest.load_split(Split::Train)?;
                Ok(SeedPool::sample_re(
                    train.examples().unwrap_or_default(),
                    cfg.generation.seed_per_label,
                    cfg.rng_seed,
                )?)
            }
        }
    }
}

/// Preview sampler for refinement candidates of `task`.
pub fn forge_sampler(cfg: &RunConfig, task: PromptTask) -> Result<Box<dyn CandidateSampler + Send + Sync>, CliError> {
    if task.is_generation() {
        Ok(Box::new(GenerationSampler {
            pool: generation_pool(cfg)?,
            cfg: cfg.generation.config.clone(),
        }))
    } else {
        Ok(Box::new(BenchSampler {
            dataset: cfg.manifest.load_split(Split::Train)?,
            model: cfg.model.clone(),
        }))
    }
}

pub fn open_forge(cfg: &RunConfig, session: &RunDir) -> Result<Forge, CliError> {
    let task = forge_task(cfg);
    let description = cfg
        .forge
        .description
        .clone()
        .unwrap_or_else(|| task.default_description().to_string());
    Ok(Forge::open(
        ForgeStore::new(session.join(FORGE_LOG)),
        task,
        &description,
        cfg.forge.budget,
        cfg.forge.samples_per_candidate,
    )?
    .with_model(cfg.model.clone()))
}

/// Records the forge log (and final prompt once finished) in the session manifest.
pub fn sync_forge_outputs(forge: &Forge, session: &mut RunDir) -> Result<String, CliError> {
    for name in [FORGE_LOG, "transcript.jsonl"] {
        if session.join(name).is_file() {
            session.record_output(name)?;
        }
    }
    let status = match &forge.log().final_prompt {
        Some(prompt) => {
            session.write(
                FINAL_PROMPT,
                serde_json::to_string_pretty(prompt).expect("template serializes") + "\n",
            )?;
            session.write("final_prompt.txt", format!("{}\n", prompt.body))?;
            "finished".to_string()
        }
        None => forge
            .log()
            .current()
            .map_or(RoundStatus::AwaitingSamples, |r| r.status())
            .to_string(),
    };
    session.save_manifest(&status)?;
    Ok(status)
}

fn preview(body: &str) -> String {
    let one_line = body.split_whitespace().collect::<Vec<_>>().join(" ");
    match one_line.char_indices().nth(96) {
        Some((i, _)) => format!("{}...", &one_line[..i]),
        None => one_line,
    }
}

pub fn forge(config: &Path, select: Option<usize>, rationale: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    let mut session = RunDir::session(&cfg.output_dir, "forge", &cfg.hash(), &cfg.doc.canonical())?;
    session.add_input(&cfg.path)?;
    let gw = cfg.gateway(session.path())?;
    let mut forge = open_forge(&cfg, &session)?;
    let sampler = forge_sampler(&cfg, forge.log().task)?;
    let result = (|| -> Result<(), CliError> {
        let status = forge.step(&gw, sampler.as_ref())?;
        if let Some(n) = select {
            if status != RoundStatus::AwaitingSelection {
                return Err(CliError::new(
                    "RoundNotReady",
                    format!("no round awaits a selection ({status})"),
                ));
            }
            forge.select(n, rationale, &gw, sampler.as_ref())?;
        }
        Ok(())
    })();
    let status = sync_forge_outputs(&forge, &mut session)?;
    result?;
    say(out, format!("forge session: {}", session.path().display()))?;
    if let Some(round) = forge.log().current().filter(|_| forge.log().final_prompt.is_none()) {
        say(
            out,
            format!(
                "round {} of {}: {} candidates",
                round.round,
                forge.log().budget,
                round.candidates.len()
            ),
        )?;
        for (i, c) in round.candidates.iter().enumerate() {
            let n = round.samples.get(&(i + 1)).map_or(0, Vec::len);
            say(
                out,
                format!("  [{}] {} ({n} samples): {}", i + 1, c.id, preview(&c.body)),
            )?;
        }
    }
    if let Some(p) = &forge.log().final_prompt {
        say(out, format!("final prompt {}: {}", p.id, preview(&p.body)))?;
    }
    say(out, format!("status: {status}"))
}

/// The forge session's final prompt for this config, if refinement finished.
fn refined_prompt(cfg: &RunConfig, task: PromptTask) -> Option<PromptTemplate> {
    let path = cfg.output_dir.join(format!("forge-{}", cfg.hash())).join(FINAL_PROMPT);
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str::<PromptTemplate>(&text)
        .ok()
        .filter(|t| t.task == task)
}

fn template_from_file(path: &Path, task: PromptTask) -> Result<PromptTemplate, CliError> {
    let body = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(PromptTemplate::new(
        format!("file:{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("prompt")),
        task,
        body.trim_end(),
        0,
    )?)
}

fn choose_template(
    cfg: &RunConfig,
    file: Option<&Path>,
    task: PromptTask,
    fallback: PromptTemplate,
) -> Result<PromptTemplate, CliError> {
    match file {
        Some(p) => template_from_file(p, task),
        None => Ok(refined_prompt(cfg, task).unwrap_or(fallback)),
    }
}

/// A kept sample as offered to the review queue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSample {
    pub id: usize,
    pub text: String,
    pub payload: Payload,
    pub prompt_id: String,
    pub seed_ref: String,
}

pub fn gen(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    in_run(&cfg, "gen", out, |rd, out| {
        let task = match cfg.task() {
            Task::Ner => PromptTask::NerGen,
            Task::Re => PromptTask::ReGen,
        };
        if let Some(p) = &cfg.generation.prompt {
            rd.add_input(p)?;
        }
        let template = choose_template(&cfg, cfg.generation.prompt.as_deref(), task, builtin::template(task))?;
        say(out, format!("template: {}", template.id))?;
        let gw = cfg.gateway(rd.path())?;
        let pool = generation_pool(&cfg)?;
        let gcfg = &cfg.generation.config;
        let result: BatchResult = match cfg.task() {
            Task::Ner => {
                say(out, format!("seed entities: {}", pool.ner_entities.len()))?;
                gen_ner_all(&gw, &pool.ner_entities, &template, gcfg)?
            }
            Task::Re => {
                if gcfg.target_size == 0 {
                    return Err(CliError::new(
                        "InvalidConfig",
                        "[generation] target_size must be positive for RE",
                    ));
                }
                let run = gen_re_run(&gw, &pool, &template, gcfg)?;
                say(out, format!("rounds: {} (target reached: {})", run.rounds, run.reached))?;
                run.result
            }
        };
        say(
            out,
            format!(
                "calls: {}, parsed lines: {}, accepted: {}, rejected: {}",
                result.calls,
                result.parsed_lines(),
                result.accepted.len(),
                result.rejected.len()
            ),
        )?;
        let gate = run_gate(&result.accepted, &cfg.gate)?;
        let corpus = match task {
            PromptTask::NerGen => write_conll(
                &gate
                    .kept
                    .iter()
                    .filter_map(|s| match &s.payload {
                        Payload::Ner(t) => Some(t.clone()),
                        Payload::Re(_) => None,
                    })
                    .collect::<Vec<_>>(),
            ),
            _ => write_re_tsv(
                &gate
                    .kept
                    .iter()
                    .filter_map(|s| match &s.payload {
                        Payload::Re(e) => Some(e.clone()),
                        Payload::Ner(_) => None,
                    })
                    .collect::<Vec<_>>(),
            ),
        };
        let samples: String = gate
            .kept
            .iter()
            .enumerate()
            .map(|(id, s)| {
                let r = ReviewSample {
                    id,
                    text: s.payload.text(),
                    payload: s.payload.clone(),
                    prompt_id: s.prompt_id.clone(),
                    seed_ref: s.seed_ref.clone(),
                };
                serde_json::to_string(&r).expect("sample serializes") + "\n"
            })
            .collect();
        rd.write("raw_corpus.tsv", result.export(cfg.task()))?;
        rd.write(CORPUS_FILE, corpus)?;
        rd.write("provenance.jsonl", result.provenance_jsonl())?;
        rd.write("quarantine.jsonl", gate.quarantine_jsonl())?;
        rd.write("gate_report.json", gate.report.to_json_line())?;
        rd.write(KEPT_SAMPLES, samples)?;
        rd.record_output("transcript.jsonl")?;
        say(out, gate.report.table().trim_end())
    })
}

fn entity_description(types: &[String]) -> String {
    if types.is_empty() {
        return "disease".to_string();
    }
    types.iter().map(|t| t.to_lowercase()).collect::<Vec<_>>().join(" or ")
}

fn write_metrics(rd: &mut RunDir, label: &str, m: &Metrics) -> Result<(), CliError> {
    rd.write("metrics.tsv", metrics_tsv(label, m))?;
    rd.write("metrics.json", m.to_json_line() + "\n")?;
    Ok(())
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "tp={} fp={} fn={} precision={:.4} recall={:.4} f1={:.4}",
        m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
    )
}

pub fn bench(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    in_run(&cfg, "bench", out, |rd, out| {
        let task = match cfg.task() {
            Task::Ner => PromptTask::NerZeroshot,
            Task::Re => PromptTask::ReZeroshot,
        };
        let fallback = match task {
            PromptTask::NerZeroshot => builtin::ner_zeroshot_for(&entity_description(&cfg.manifest.entity_types)),
            _ => builtin::template(task),
        };
        if let Some(p) = &cfg.bench.prompt {
            rd.add_input(p)?;
        }
        let template = choose_template(&cfg, cfg.bench.prompt.as_deref(), task, fallback)?;
        let test = load_split(&cfg, rd, Split::Test)?;
        let gw = cfg.gateway(rd.path())?;
        let bcfg = BenchConfig {
            subset: cfg.bench.subset,
            concurrency: cfg.bench.concurrency,
            model: cfg.model.clone(),
            entity_types: cfg.manifest.entity_types.clone(),
        };
        let run = run_bench(&gw, &test, &template, &bcfg)?;
        let m = run.metrics()?;
        rd.write("predictions.jsonl", run.to_jsonl())?;
        write_metrics(rd, &template.id, &m)?;
        rd.record_output("transcript.jsonl")?;
        say(out, format!("template: {}", template.id))?;
        say(
            out,
            format!("items: {}, unrecovered failures: {}", run.records.len(), run.failures()),
        )?;
        if cfg.task() == Task::Re {
            say(out, format!("invalid reply rate: {:.4}", run.invalid_rate()))?;
        }
        say(out, metrics_line(&m))
    })
}

/// Scores aligned predictions against gold.
fn score_against(gold: &Dataset, preds: Vec<Prediction>) -> Result<Metrics, CliError> {
    let preds = align_predictions(preds, gold.len())?;
    let missing = |id: usize, what: &str| CliError::new("ParseError", format!("prediction {id} has no {what}"));
    match gold.items() {
        Items::Ner(sentences) => {
            let tags = preds
                .into_iter()
                .map(|p| p.tags.ok_or_else(|| missing(p.id, "tags")))
                .collect::<Result<Vec<Vec<Tag>>, _>>()?;
            Ok(span_prf(sentences, &tags)?)
        }
        Items::Re(examples) => {
            let labels = preds
                .into_iter()
                .map(|p| p.label.ok_or_else(|| missing(p.id, "label")))
                .collect::<Result<Vec<Label>, _>>()?;
            let gold: Vec<Label> = examples.iter().map(|e| e.label).collect();
            Ok(cls_prf(&gold, &labels)?)
        }
    }
}

fn read_prediction_file(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_predictions(&text)?)
}

pub fn score(config: &Path, pred: &Path, split: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    let split = parse_split(split)?;
    in_run(&cfg, "score", out, |rd, out| {
        let gold = load_split(&cfg, rd, split)?;
        rd.add_input(pred)?;
        let m = score_against(&gold, read_prediction_file(pred)?)?;
        write_metrics(rd, &pred.display().to_string(), &m)?;
        say(out, metrics_line(&m))
    })
}

/// Sentences grouped by the lowercased surface of their first entity, in
/// first-seen order. Sentences without entities are left out.
fn by_entity(sentences: &[TaggedSentence]) -> Vec<Vec<TaggedSentence>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<TaggedSentence>> = BTreeMap::new();
    for s in sentences {
        let Some(span) = s.spans().into_iter().next() else {
            continue;
        };
        let words: Vec<&str> = s.words().collect();
        let key = words[span.start..=span.end].join(" ").to_lowercase();
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(s.clone());
    }
    order
        .into_iter()
        .map(|k| groups.remove(&k).expect("key recorded"))
        .collect()
}

fn pick<T: Clone>(items: &[T], k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let k = k.min(items.len());
    let mut idx = sample(rng, items.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Training set for one sweep trial, drawn with a seed derived from the
/// run seed, the grid value and the trial index.
fn sweep_train(cfg: &RunConfig, train: &Dataset, spec: TrialSpec) -> Result<Dataset, String> {
    let seed = cfg.rng_seed
        ^ spec.x.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (spec.trial as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = spec.x as usize;
    match (cfg.sweep.variable, train.items()) {
        (SweepVariable::TrainSize, items) => {
            if x > train.len() {
                return Err(format!("train-size {x} exceeds the {} available items", train.len()));
            }
            Ok(match items {
                Items::Ner(s) => Dataset::ner(pick(s, x, &mut rng)),
                Items::Re(e) => Dataset::re(pick(e, x, &mut rng)),
            })
        }
        (SweepVariable::PerEntity, Items::Ner(s)) => Ok(Dataset::ner(
            by_entity(s).iter().flat_map(|g| pick(g, x, &mut rng)).collect(),
        )),
        (SweepVariable::EntityRatio, Items::Ner(s)) => {
            if x > 100 {
                return Err(format!("entity-ratio {x}% exceeds 100%"));
            }
            let groups = by_entity(s);
            let k = (groups.len() * x + 50) / 100;
            Ok(Dataset::ner(pick(&groups, k, &mut rng).into_iter().flatten().collect()))
        }
        (v, _) => Err(format!("sweep variable {v:?} does not apply to this task")),
    }
}

fn baseline_metrics(train: &Dataset, test: &Dataset) -> Result<Metrics, String> {
    match (train.items(), test.items()) {
        (Items::Ner(tr), Items::Ner(te)) => {
            let tagger = GazetteerTagger::train(tr);
            let pred: Vec<Vec<Tag>> = te.iter().map(|s| tagger.tag(s)).collect();
            span_prf(te, &pred).map_err(|e| e.to_string())
        }
        (Items::Re(tr), Items::Re(te)) => {
            let nn = NearestNeighbour::train(tr);
            let pred: Vec<Label> = te.iter().map(|e| nn.predict(&e.sentence)).collect();
            let gold: Vec<Label> = te.iter().map(|e| e.label).collect();
            cls_prf(&gold, &pred).map_err(|e| e.to_string())
        }
        _ => Err("training corpus and test split hold different tasks".into()),
    }
}

pub fn curve(config: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    in_run(&cfg, "curve", out, |rd, out| {
        let test = load_split(&cfg, rd, Split::Test)?;
        let points = if cfg.sweep.variable == SweepVariable::External {
            let dir = cfg.sweep.predictions.clone().expect("validated at load");
            learning_curve(&cfg.sweep.grid, cfg.sweep.trials, |spec| {
                let path = dir.join(spec.x.to_string()).join(format!("trial-{}.jsonl", spec.trial));
                read_prediction_file(&path)
                    .and_then(|p| score_against(&test, p))
                    .map_err(|e| e.to_string())
            })
        } else {
            let train = match &cfg.sweep.corpus {
                Some(p) => {
                    rd.add_input(p)?;
                    read_corpus(cfg.task(), p)?
                }
                None => load_split(&cfg, rd, Split::Train)?,
            };
            learning_curve(&cfg.sweep.grid, cfg.sweep.trials, |spec| {
                let subset = sweep_train(&cfg, &train, spec)?;
                baseline_metrics(&subset, &test)
            })
        };
        rd.write("curve.tsv", curve_tsv(&points))?;
        rd.write("trials.tsv", trials_tsv(&points))?;
        rd.write(
            "curve.json",
            serde_json::to_string_pretty(&points).expect("curve serializes") + "\n",
        )?;
        let failed: usize = points.iter().map(|p| p.errors.len()).sum();
        say(out, format!("points: {}, failed trials: {failed}", points.len()))?;
        say(out, curve_tsv(&points).trim_end())
    })
}

fn vectors_for(
    texts: &[String],
    source: Source,
    prefix: &str,
    file: Option<&Path>,
) -> Result<Vec<LabeledVector>, CliError> {
    match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(parse_embeddings(&text, source)?)
        }
        None => Ok(texts
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledVector {
                id: format!("{prefix}{i}"),
                source,
                vector: hashed_bow(t),
            })
            .collect()),
    }
}

pub fn shift(config: &Path, synthetic: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config)?;
    let synthetic: PathBuf = synthetic
        .map(Path::to_path_buf)
        .or_else(|| cfg.shift.synthetic.clone())
        .or_else(|| latest_run_with(&cfg.output_dir, "gen", CORPUS_FILE).map(|d| d.join(CORPUS_FILE)))
        .ok_or_else(|| {
            CliError::new(
                "InvalidConfig",
                "no synthetic corpus: pass --synthetic or run gen first",
            )
        })?;
    in_run(&cfg, "shift", out, |rd, out| {
        let original = load_split(&cfg, rd, Split::Train)?.texts();
        rd.add_input(&synthetic)?;
        let synth = read_corpus(cfg.task(), &synthetic)?.texts();
        let report = shift_report(&original, &synth)?;
        rd.write("shift_report.tsv", report.table())?;
        rd.write(
            "shift_report.json",
            serde_json::to_string(&report).expect("report serializes") + "\n",
        )?;
        for p in [&cfg.shift.original_embeddings, &cfg.shift.synthetic_embeddings]
            .into_iter()
            .flatten()
        {
            rd.add_input(p)?;
        }
        let mut vectors = vectors_for(
            &original,
            Source::Original,
            "o",
            cfg.shift.original_embeddings.as_deref(),
        )?;
        vectors.extend(vectors_for(
            &synth,
            Source::Synthetic,
            "s",
            cfg.shift.synthetic_embeddings.as_deref(),
        )?);
        let set = pca_project(&vectors)?;
        rd.write("scatter.tsv", scatter_tsv(&set))?;
        say(out, report.table().trim_end())?;
        if set.degenerate {
            say(out, "projection: degenerate (all vectors identical)")?;
        }
        say(out, format!("scatter points: {}", set.points.len()))
    })
}
