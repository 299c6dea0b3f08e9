//! Synthetic labeled corpora for biomedical NER and relation extraction.
//!
//! The pipeline: a chat-completion model (or the deterministic mock) is
//! prompted with seed entities / seed examples, replies are parsed into
//! candidate samples with IOB annotations, a quality gate removes invalid
//! and duplicated samples, and the scorer / shift analyzer measure the
//! result against original data.

pub mod corpus;
pub mod generator;
pub mod kv;
pub mod llm_gateway;
pub mod prompt_forge;
pub mod quality_gate;
pub mod scorer;
pub mod shift_analyzer;
pub mod zeroshot_bench;

/// Stable machine-readable name for an error variant, used by the CLI's
/// one-line error output.
pub trait ErrorClass {
    fn class(&self) -> &'static str;
}
