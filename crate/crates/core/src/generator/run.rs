use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    annotate_entity, parse_generation_reply, CandidateSample, GenError, GenerationConfig, ParsedLine, Payload,
    RejectReason, RejectedLine, SeedEntity, SeedPool,
};
use crate::corpus::{write_conll, write_re_tsv, Label, ReExample, ReSchema, Source, TaggedSentence, Task};
use crate::llm_gateway::{ChatRequest, Gateway, GENERATION_TEMPERATURE};
use crate::prompt_forge::{Bindings, Placeholder, PromptTask, PromptTemplate};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchResult {
    pub accepted: Vec<CandidateSample>,
    pub rejected: Vec<RejectedLine>,
    pub calls: usize,
}

/// One line of the provenance sidecar; covers accepted and rejected lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub prompt_id: String,
    pub seed_ref: String,
    pub round: u32,
    pub batch: usize,
    pub line: usize,
    pub raw_line: String,
    pub status: String,
    pub reason: Option<RejectReason>,
}

impl BatchResult {
    pub fn extend(&mut self, other: BatchResult) {
        self.accepted.extend(other.accepted);
        self.rejected.extend(other.rejected);
        self.calls += other.calls;
    }

    pub fn parsed_lines(&self) -> usize {
        self.accepted.len() + self.rejected.len()
    }

    /// Records ordered by `(batch, line)`.
    pub fn provenance(&self) -> Vec<ProvenanceRecord> {
        let mut out: Vec<ProvenanceRecord> = self
            .accepted
            .iter()
            .map(|c| ProvenanceRecord {
                prompt_id: c.prompt_id.clone(),
                seed_ref: c.seed_ref.clone(),
                round: c.round,
                batch: c.batch,
                line: c.line,
                raw_line: c.raw_line.clone(),
                status: "accepted".into(),
                reason: None,
            })
            .chain(self.rejected.iter().map(|r| ProvenanceRecord {
                prompt_id: r.prompt_id.clone(),
                seed_ref: r.seed_ref.clone(),
                round: r.round,
                batch: r.batch,
                line: r.line,
                raw_line: r.raw_line.clone(),
                status: "rejected".into(),
                reason: Some(r.reason),
            }))
            .collect();
        out.sort_by_key(|r| (r.batch, r.line));
        out
    }

    pub fn provenance_jsonl(&self) -> String {
        self.provenance()
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn ner_sentences(&self) -> Vec<TaggedSentence> {
        self.accepted
            .iter()
            .filter_map(|c| match &c.payload {
                Payload::Ner(s) => Some(s.clone()),
                Payload::Re(_) => None,
            })
            .collect()
    }

    pub fn re_examples(&self) -> Vec<ReExample> {
        self.accepted
            .iter()
            .filter_map(|c| match &c.payload {
                Payload::Re(e) => Some(e.clone()),
                Payload::Ner(_) => None,
            })
            .collect()
    }

    /// Accepted payloads as CoNLL (NER) or TSV (RE).
    pub fn export(&self, task: Task) -> String {
        match task {
            Task::Ner => write_conll(&self.ner_sentences()),
            Task::Re => write_re_tsv(&self.re_examples()),
        }
    }
}

fn expect_task(template: &PromptTemplate, expected: PromptTask) -> Result<(), GenError> {
    if template.task != expected {
        return Err(GenError::WrongTemplate {
            expected,
            found: template.task,
        });
    }
    Ok(())
}

fn call(gateway: &Gateway, prompt: String, cfg: &GenerationConfig, seed_ref: &str) -> Result<String, GenError> {
    let request = ChatRequest::user(prompt, GENERATION_TEMPERATURE).with_model(cfg.model.clone());
    let reply = gateway.complete(&request)?;
    if reply.content.trim().is_empty() {
        return Err(GenError::EmptyReply {
            seed_ref: seed_ref.to_string(),
        });
    }
    Ok(reply.content)
}

/// One generation call for one seed entity. At most `n_per_entity`
/// sentences are accepted; every other parsed line is returned as a reject.
pub fn gen_ner_batch(
    gateway: &Gateway,
    entity: &SeedEntity,
    template: &PromptTemplate,
    cfg: &GenerationConfig,
    batch: usize,
) -> Result<BatchResult, GenError> {
    expect_task(template, PromptTask::NerGen)?;
    let bindings: Bindings = [
        (Placeholder::SeedEntities, entity.surface.clone()),
        (Placeholder::Count, cfg.n_per_entity.to_string()),
    ]
    .into();
    let reply = call(gateway, template.render(&bindings)?, cfg, &entity.surface)?;
    let parsed = parse_generation_reply(&reply, PromptTask::NerGen);
    let mut out = BatchResult {
        calls: 1,
        ..BatchResult::default()
    };
    let reject = |line: usize, raw: &str, reason| RejectedLine {
        prompt_id: template.id.clone(),
        seed_ref: entity.surface.clone(),
        round: template.round,
        batch,
        line,
        raw_line: raw.to_string(),
        reason,
    };
    for cand in parsed.accepts {
        let ParsedLine::Sentence(text) = &cand.parsed else {
            unreachable!("NER parsing yields sentences")
        };
        match annotate_entity(text, entity) {
            Ok(tagged) if out.accepted.len() < cfg.n_per_entity => out.accepted.push(CandidateSample {
                payload: Payload::Ner(tagged),
                prompt_id: template.id.clone(),
                seed_ref: entity.surface.clone(),
                round: template.round,
                batch,
                line: cand.line,
                raw_line: cand.raw,
            }),
            Ok(_) => out
                .rejected
                .push(reject(cand.line, &cand.raw, RejectReason::QuotaExceeded)),
            Err(reason) => out.rejected.push(reject(cand.line, &cand.raw, reason)),
        }
    }
    out.rejected
        .extend(parsed.rejects.into_iter().map(|r| reject(r.line, &r.raw, r.reason)));
    Ok(out)
}

/// Runs `f` over `0..n` on up to `workers` threads and returns the results
/// in index order.
fn parallel_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|v| v.expect("every index ran"))
        .collect()
}

/// One batch per entity, run concurrently; results are merged in entity
/// order so the output does not depend on completion order.
pub fn gen_ner_all(
    gateway: &Gateway,
    entities: &[SeedEntity],
    template: &PromptTemplate,
    cfg: &GenerationConfig,
) -> Result<BatchResult, GenError> {
    cfg.validate()?;
    expect_task(template, PromptTask::NerGen)?;
    let results = parallel_map(entities.len(), cfg.concurrency, |i| {
        gen_ner_batch(gateway, &entities[i], template, cfg, i)
    });
    let mut out = BatchResult::default();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Seed rows for one RE round: indices into the pool, positives first.
fn draw_seeds(pool: &SeedPool, cfg: &GenerationConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, GenError> {
    let mut picked = Vec::new();
    for (label, k) in [(Label::Yes, cfg.pos_per_round), (Label::No, cfg.neg_per_round)] {
        let idx = pool.indices(label);
        if idx.len() < k {
            return Err(GenError::PoolTooSmall {
                label,
                needed: k,
                available: idx.len(),
            });
        }
        picked.extend(rand::seq::index::sample(rng, idx.len(), k).into_iter().map(|i| idx[i]));
    }
    Ok(picked)
}

fn re_batch_with_seeds(
    gateway: &Gateway,
    pool: &SeedPool,
    template: &PromptTemplate,
    cfg: &GenerationConfig,
    round: u32,
    seeds: &[usize],
) -> Result<BatchResult, GenError> {
    let rows: Vec<String> = seeds.iter().map(|&i| pool.re_examples[i].seed_row()).collect();
    let seed_ref = seeds.iter().map(|i| format!("s{i}")).collect::<Vec<_>>().join(",");
    let bindings: Bindings = [(Placeholder::SeedExamples, rows.join("\n"))].into();
    let reply = call(gateway, template.render(&bindings)?, cfg, &seed_ref)?;
    let parsed = parse_generation_reply(&reply, PromptTask::ReGen);
    let schema = ReSchema::default();
    let batch = round as usize - 1;
    let mut out = BatchResult {
        calls: 1,
        ..BatchResult::default()
    };
    let reject = |line: usize, raw: &str, reason| RejectedLine {
        prompt_id: template.id.clone(),
        seed_ref: seed_ref.clone(),
        round,
        batch,
        line,
        raw_line: raw.to_string(),
        reason,
    };
    let (mut pos, mut neg) = (0, 0);
    for cand in parsed.accepts {
        let ParsedLine::Row { sentence, label } = cand.parsed else {
            unreachable!("RE parsing yields rows")
        };
        if schema.missing(&sentence).is_some() {
            out.rejected
                .push(reject(cand.line, &cand.raw, RejectReason::MissingPlaceholder));
            continue;
        }
        let (count, quota) = match label {
            Label::Yes => (&mut pos, cfg.pos_per_round),
            Label::No => (&mut neg, cfg.neg_per_round),
        };
        if *count >= quota {
            out.rejected
                .push(reject(cand.line, &cand.raw, RejectReason::QuotaExceeded));
            continue;
        }
        *count += 1;
        out.accepted.push(CandidateSample {
            payload: Payload::Re(ReExample::new(sentence, label, Source::Synthetic)),
            prompt_id: template.id.clone(),
            seed_ref: seed_ref.clone(),
            round,
            batch,
            line: cand.line,
            raw_line: cand.raw,
        });
    }
    out.rejected
        .extend(parsed.rejects.into_iter().map(|r| reject(r.line, &r.raw, r.reason)));
    Ok(out)
}

/// One RE round (1-based): draws seed rows without replacement, renders
/// them in `|sentence|label|` form and keeps at most the per-label quota.
pub fn gen_re_batch(
    gateway: &Gateway,
    pool: &SeedPool,
    template: &PromptTemplate,
    cfg: &GenerationConfig,
    round: u32,
    rng: &mut ChaCha8Rng,
) -> Result<BatchResult, GenError> {
    expect_task(template, PromptTask::ReGen)?;
    if pool.task != Task::Re {
        return Err(GenError::InvalidSeed("RE generation needs an RE seed pool".into()));
    }
    if round == 0 {
        return Err(GenError::InvalidConfig("RE rounds are numbered from 1".into()));
    }
    let seeds = draw_seeds(pool, cfg, rng)?;
    re_batch_with_seeds(gateway, pool, template, cfg, round, &seeds)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReRun {
    pub result: BatchResult,
    pub rounds: usize,
    /// False when the round limit stopped the run short of `target_size`.
    pub reached: bool,
}

/// Repeats RE rounds until `target_size` samples are accepted. Rounds run
/// in concurrent waves; seeds are drawn up front in round order, so the
/// output equals a sequential run. Surplus rows of the final wave are
/// rejected as `QuotaExceeded`.
pub fn gen_re_run(
    gateway: &Gateway,
    pool: &SeedPool,
    template: &PromptTemplate,
    cfg: &GenerationConfig,
) -> Result<ReRun, GenError> {
    cfg.validate()?;
    expect_task(template, PromptTask::ReGen)?;
    let per_round = cfg.pos_per_round + cfg.neg_per_round;
    let limit = cfg.re_round_limit();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut out = BatchResult::default();
    let mut rounds = 0usize;
    while out.accepted.len() < cfg.target_size && rounds < limit {
        let wave = (cfg.target_size - out.accepted.len())
            .div_ceil(per_round)
            .min(limit - rounds);
        let seeds = (0..wave)
            .map(|_| draw_seeds(pool, cfg, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let first = rounds as u32 + 1;
        let results = parallel_map(wave, cfg.concurrency, |i| {
            re_batch_with_seeds(gateway, pool, template, cfg, first + i as u32, &seeds[i])
        });
        for r in results {
            let mut batch = r?;
            let room = cfg.target_size.saturating_sub(out.accepted.len());
            if batch.accepted.len() > room {
                for surplus in batch.accepted.split_off(room) {
                    batch.rejected.push(RejectedLine {
                        prompt_id: surplus.prompt_id,
                        seed_ref: surplus.seed_ref,
                        round: surplus.round,
                        batch: surplus.batch,
                        line: surplus.line,
                        raw_line: surplus.raw_line,
                        reason: RejectReason::QuotaExceeded,
                    });
                }
            }
            out.extend(batch);
        }
        rounds += wave;
    }
    Ok(ReRun {
        reached: out.accepted.len() >= cfg.target_size,
        result: out,
        rounds,
    })
}
