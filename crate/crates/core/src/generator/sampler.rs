use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::run::{gen_ner_batch, gen_re_batch, BatchResult};
use super::{GenError, GenerationConfig, SeedPool};
use crate::llm_gateway::Gateway;
use crate::prompt_forge::{CandidateSampler, ForgeError, PromptTask, PromptTemplate};

/// Preview samples for generation prompts during refinement. Every
/// candidate sees the same seeds, so the reviewer compares prompts and
/// not seed luck.
pub struct GenerationSampler {
    pub pool: SeedPool,
    pub cfg: GenerationConfig,
}

impl From<GenError> for ForgeError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Gateway(g) => ForgeError::Gateway(g),
            GenError::Template(f) => f,
            other => ForgeError::Sampler(other.to_string()),
        }
    }
}

fn raw_lines(result: &BatchResult) -> Vec<String> {
    result.provenance().into_iter().map(|r| r.raw_line).collect()
}

impl CandidateSampler for GenerationSampler {
    fn samples(&self, template: &PromptTemplate, count: usize, gateway: &Gateway) -> Result<Vec<String>, ForgeError> {
        match template.task {
            PromptTask::NerGen => {
                let entity = self
                    .pool
                    .ner_entities
                    .first()
                    .ok_or_else(|| ForgeError::Sampler("no seed entities".into()))?;
                let cfg = GenerationConfig {
                    n_per_entity: count.max(1),
                    ..self.cfg.clone()
                };
                let mut lines = raw_lines(&gen_ner_batch(gateway, entity, template, &cfg, 0)?);
                lines.truncate(count);
                Ok(lines)
            }
            PromptTask::ReGen => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
                let per_round = (self.cfg.pos_per_round + self.cfg.neg_per_round).max(1);
                let max_calls = count.div_ceil(per_round) + 2;
                let mut lines = Vec::new();
                for round in 1..=max_calls as u32 {
                    if lines.len() >= count {
                        break;
                    }
                    lines.extend(raw_lines(&gen_re_batch(
                        gateway, &self.pool, template, &self.cfg, round, &mut rng,
                    )?));
                }
                lines.truncate(count);
                Ok(lines)
            }
            other => Err(ForgeError::Sampler(format!(
                "generation sampler cannot preview {other} prompts"
            ))),
        }
    }
}
