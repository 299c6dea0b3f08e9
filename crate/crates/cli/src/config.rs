//! Run configuration: a `key: value` file with sections.
//!
//! ```text
//! [run]
//! dataset: data/ncbi.manifest
//! output_dir: runs
//! rng_seed: 7
//!
//! [provider]
//! kind: mock
//!
//! [generation]
//! n_per_entity: 30
//! ```
//!
//! Relative paths resolve against the config file's directory. Every
//! section except `[run]` is optional.

use std::path::{Path, PathBuf};

use clinsynth::corpus::{DatasetManifest, Task};
use clinsynth::generator::GenerationConfig;
use clinsynth::kv::{KvDocument, KvError};
use clinsynth::llm_gateway::{Gateway, MockProvider, ProviderConfig, DEFAULT_MODEL};
use clinsynth::prompt_forge::{DEFAULT_ROUND_BUDGET, DEFAULT_SAMPLES_PER_CANDIDATE};
use clinsynth::quality_gate::GateConfig;
use clinsynth::scorer::SweepGrid;
use clinsynth::zeroshot_bench::DEFAULT_SUBSET;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderKind {
    Mock { seed: u64, corruption: f64 },
    Real(ProviderConfig),
}

/// What a learning-curve grid value controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Training items drawn at random from the training corpus.
    TrainSize,
    /// Sentences kept per seed entity (NER).
    PerEntity,
    /// Percentage of seed entities whose sentences are kept (NER).
    EntityRatio,
    /// Scores prediction files `<predictions>/<x>/trial-<t>.jsonl`.
    External,
}

impl std::str::FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train-size" => Ok(SweepVariable::TrainSize),
            "per-entity" => Ok(SweepVariable::PerEntity),
            "entity-ratio" => Ok(SweepVariable::EntityRatio),
            "external" => Ok(SweepVariable::External),
            other => Err(format!(
                "unknown sweep variable {other:?} (train-size, per-entity, entity-ratio, external)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub trials: usize,
    pub variable: SweepVariable,
    /// Training corpus for the baselines; defaults to the train split.
    pub corpus: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub subset: Option<usize>,
    pub concurrency: usize,
    pub prompt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeSettings {
    pub budget: u32,
    pub samples_per_candidate: usize,
    pub description: Option<String>,
    /// Refine the zero-shot task prompt instead of the generation prompt.
    pub zeroshot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSettings {
    pub config: GenerationConfig,
    /// Use only the first k seed entities (NER).
    pub entities: Option<usize>,
    /// Seeds drawn per label from the train split when there is no seed pool (RE).
    pub seed_per_label: usize,
    pub prompt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSettings {
    pub synthetic: Option<PathBuf>,
    pub original_embeddings: Option<PathBuf>,
    pub synthetic_embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    pub doc: KvDocument,
    pub dataset: PathBuf,
    pub manifest: DatasetManifest,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub rng_seed: u64,
    pub model: String,
    pub provider: ProviderKind,
    pub generation: GenSettings,
    pub gate: GateConfig,
    pub bench: BenchSettings,
    pub forge: ForgeSettings,
    pub sweep: SweepConfig,
    pub shift: ShiftSettings,
}

fn kv(e: KvError) -> CliError {
    CliError::new("InvalidConfig", e.to_string())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::new("InvalidConfig", msg)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::new("IoError", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self, CliError> {
        let doc = KvDocument::parse(text).map_err(kv)?;
        let resolve = |p: &str| base.join(p);
        let existing = |section: &str, key: &str| -> Result<Option<PathBuf>, CliError> {
            match doc.get(section, key) {
                None => Ok(None),
                Some(p) => {
                    let p = resolve(p);
                    if p.exists() {
                        Ok(Some(p))
                    } else {
                        Err(invalid(format!("[{section}] {key}: {} does not exist", p.display())))
                    }
                }
            }
        };

        let dataset = existing("run", "dataset")?.ok_or_else(|| kv(doc.require("run", "dataset").unwrap_err()))?;
        let manifest = DatasetManifest::load(&dataset).map_err(|e| CliError::from_class(&e))?;
        if let Some(task) = doc.get("run", "task") {
            let task: Task = task.parse().map_err(invalid)?;
            if task != manifest.task {
                return Err(invalid(format!(
                    "[run] task {task} but the dataset is {}",
                    manifest.task
                )));
            }
        }
        let output_dir = resolve(doc.get("run", "output_dir").unwrap_or("runs"));
        let cache_dir = doc
            .get("run", "cache_dir")
            .map(resolve)
            .unwrap_or_else(|| output_dir.join("cache"));
        let rng_seed: u64 = doc.parse_or("run", "rng_seed", 0).map_err(kv)?;
        let model = doc.get("run", "model").unwrap_or(DEFAULT_MODEL).to_string();

        let provider = match doc.get("provider", "kind").unwrap_or("mock") {
            "mock" => ProviderKind::Mock {
                seed: doc.parse_or("provider", "mock_seed", rng_seed).map_err(kv)?,
                corruption: doc.parse_or("provider", "mock_corruption", 0.0).map_err(kv)?,
            },
            "real" => {
                let d = ProviderConfig::default();
                let api_key_env = doc
                    .get("provider", "api_key_env")
                    .unwrap_or(&d.api_key_env)
                    .trim()
                    .to_string();
                if api_key_env.is_empty() {
                    return Err(invalid("[provider] kind real needs api_key_env"));
                }
                ProviderKind::Real(ProviderConfig {
                    endpoint_url: doc
                        .get("provider", "endpoint_url")
                        .unwrap_or(&d.endpoint_url)
                        .to_string(),
                    api_key_env,
                    max_retries: doc.parse_or("provider", "max_retries", d.max_retries).map_err(kv)?,
                    backoff_base_ms: doc
                        .parse_or("provider", "backoff_base_ms", d.backoff_base_ms)
                        .map_err(kv)?,
                    rate_limit_per_min: doc
                        .parse_or("provider", "rate_limit_per_min", d.rate_limit_per_min)
                        .map_err(kv)?,
                    timeout_ms: doc.parse_or("provider", "timeout_ms", d.timeout_ms).map_err(kv)?,
                })
            }
            other => return Err(invalid(format!("[provider] kind must be mock or real, got {other:?}"))),
        };

        let d = GenerationConfig::default();
        let config = GenerationConfig {
            n_per_entity: doc.parse_or("generation", "n_per_entity", d.n_per_entity).map_err(kv)?,
            pos_per_round: doc
                .parse_or("generation", "pos_per_round", d.pos_per_round)
                .map_err(kv)?,
            neg_per_round: doc
                .parse_or("generation", "neg_per_round", d.neg_per_round)
                .map_err(kv)?,
            target_size: doc.parse_or("generation", "target_size", d.target_size).map_err(kv)?,
            rng_seed,
            concurrency: doc.parse_or("generation", "concurrency", d.concurrency).map_err(kv)?,
            model: model.clone(),
            max_rounds: doc.parse_opt("generation", "max_rounds").map_err(kv)?,
        };
        config.validate().map_err(|e| invalid(e.to_string()))?;
        let generation = GenSettings {
            config,
            entities: doc.parse_opt("generation", "entities").map_err(kv)?,
            seed_per_label: doc.parse_or("generation", "seed_per_label", 50).map_err(kv)?,
            prompt: existing("generation", "prompt")?,
        };

        let dg = GateConfig::default();
        let gate = GateConfig {
            jaccard_threshold: doc
                .parse_or("gate", "jaccard_threshold", dg.jaccard_threshold)
                .map_err(kv)?,
            shingle_size: doc.parse_or("gate", "shingle_size", dg.shingle_size).map_err(kv)?,
            min_tokens: doc.parse_or("gate", "min_tokens", dg.min_tokens).map_err(kv)?,
            max_tokens: doc.parse_or("gate", "max_tokens", dg.max_tokens).map_err(kv)?,
        };
        gate.validate().map_err(|e| invalid(e.to_string()))?;

        let subset = match doc.get("bench", "subset") {
            Some("all") => None,
            Some(_) => Some(doc.parse_or("bench", "subset", DEFAULT_SUBSET).map_err(kv)?),
            None => Some(DEFAULT_SUBSET),
        };
        let bench = BenchSettings {
            subset,
            concurrency: doc.parse_or("bench", "concurrency", 4).map_err(kv)?,
            prompt: existing("bench", "prompt")?,
        };

        let forge = ForgeSettings {
            budget: doc.parse_or("forge", "budget", DEFAULT_ROUND_BUDGET).map_err(kv)?,
            samples_per_candidate: doc
                .parse_or("forge", "samples_per_candidate", DEFAULT_SAMPLES_PER_CANDIDATE)
                .map_err(kv)?,
            description: doc.get("forge", "description").map(String::from),
            zeroshot: doc.parse_or("forge", "zeroshot", false).map_err(kv)?,
        };

        let grid: SweepGrid = doc
            .get("sweep", "grid")
            .unwrap_or("1,2,3,4,5,10,15,20,25,30")
            .parse()
            .map_err(|e: clinsynth::scorer::ScoreError| invalid(e.to_string()))?;
        let sweep = SweepConfig {
            grid,
            trials: doc.parse_or("sweep", "trials", 3).map_err(kv)?,
            variable: doc
                .get("sweep", "variable")
                .unwrap_or("train-size")
                .parse()
                .map_err(invalid)?,
            corpus: existing("sweep", "corpus")?,
            predictions: existing("sweep", "predictions")?,
        };
        if sweep.trials == 0 {
            return Err(invalid("[sweep] trials must be positive"));
        }
        if sweep.variable == SweepVariable::External && sweep.predictions.is_none() {
            return Err(invalid("[sweep] variable external needs predictions"));
        }

        let shift = ShiftSettings {
            synthetic: existing("shift", "synthetic")?,
            original_embeddings: existing("shift", "original_embeddings")?,
            synthetic_embeddings: existing("shift", "synthetic_embeddings")?,
        };

        Ok(RunConfig {
            path: path.to_path_buf(),
            doc,
            dataset,
            manifest,
            output_dir,
            cache_dir,
            rng_seed,
            model,
            provider,
            generation,
            gate,
            bench,
            forge,
            sweep,
            shift,
        })
    }

    pub fn task(&self) -> Task {
        self.manifest.task
    }

    /// First 12 hex digits of the SHA-256 of the canonical config text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.doc.canonical().as_bytes()))[..12].to_string()
    }

    /// Gateway with the shared response cache and a transcript in `run_dir`.
    pub fn gateway(&self, run_dir: &Path) -> Result<Gateway, CliError> {
        let gw = match &self.provider {
            ProviderKind::Mock { seed, corruption } => {
                Gateway::mock(MockProvider::new(*seed).with_corruption(*corruption))
            }
            ProviderKind::Real(cfg) => {
                if std::env::var(&cfg.api_key_env).map_or(true, |v| v.is_empty()) {
                    return Err(CliError::new(
                        "MissingApiKey",
                        format!("API key environment variable {} is not set", cfg.api_key_env),
                    ));
                }
                Gateway::http(cfg.clone())
            }
        };
        gw.with_cache(&self.cache_dir)
            .and_then(|g| g.with_transcript(run_dir.join("transcript.jsonl")))
            .map_err(|e| CliError::from_class(&e))
    }
}
