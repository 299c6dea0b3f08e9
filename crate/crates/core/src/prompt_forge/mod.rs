//! Prompt templates, placeholder binding and the round-based refinement
//! workflow (five candidates per round, human selection, augmentation of
//! the winner).

mod refine;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use refine::{
    augment_prompt, meta_prompt, parse_candidates, Advance, CandidateSampler, Forge, ForgeEvent, ForgeStore,
    RefinementLog, RoundState, RoundStatus, CANDIDATES_PER_ROUND, DEFAULT_ROUND_BUDGET, DEFAULT_SAMPLES_PER_CANDIDATE,
};

use crate::llm_gateway::GatewayError;
use crate::ErrorClass;

/// Fixed phrases shared by prompt builders and the mock provider.
pub mod phrases {
    pub const META_OPENING: &str = "Provide five concise prompts or templates that can be used to";
    pub const AUGMENT_OPENING: &str = "Augment five prompts based on the previous best prompt";
    pub const REQUIRED_PLACEHOLDERS_LABEL: &str = "Required placeholders:";
    pub const NER_GEN_MARKER: &str = "sentences containing the words ";
    pub const RE_GEN_MARKER: &str = "gene-disease relation extraction task";
    pub const NER_TASK_MARKER: &str = "NER task for \"";
    pub const RE_TASK_MARKER: &str = "predict whether the gene and disease have a relation";
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForgeError {
    #[error("placeholder {0} has no binding")]
    UnboundPlaceholder(Placeholder),
    #[error("binding for {0} does not match any placeholder in the template")]
    UnknownPlaceholder(Placeholder),
    #[error("template for {task} is missing {missing:?} / has unexpected {unexpected:?}")]
    PlaceholderMismatch {
        task: PromptTask,
        missing: Vec<Placeholder>,
        unexpected: Vec<Placeholder>,
    },
    #[error("expected {expected} candidate prompts, found {found}")]
    CandidateCountMismatch { expected: usize, found: usize },
    #[error("reply contains no list of candidate prompts")]
    UnparseableReply,
    #[error("candidate {0} is not part of the current round")]
    InvalidSelection(usize),
    #[error("round is not ready for this transition (status {0})")]
    RoundNotReady(RoundStatus),
    #[error("refinement already finished")]
    AlreadyFinished,
    #[error("template task {template} does not match {expected}")]
    TaskMismatch { template: PromptTask, expected: PromptTask },
    #[error("refinement log: {0}")]
    Store(String),
    #[error("sampling candidates: {0}")]
    Sampler(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ErrorClass for ForgeError {
    fn class(&self) -> &'static str {
        match self {
            ForgeError::UnboundPlaceholder(_) => "UnboundPlaceholder",
            ForgeError::UnknownPlaceholder(_) => "UnknownPlaceholder",
            ForgeError::PlaceholderMismatch { .. } => "PlaceholderMismatch",
            ForgeError::CandidateCountMismatch { .. } => "CandidateCountMismatch",
            ForgeError::UnparseableReply => "UnparseableReply",
            ForgeError::InvalidSelection(_) => "InvalidSelection",
            ForgeError::RoundNotReady(_) => "RoundNotReady",
            ForgeError::AlreadyFinished => "AlreadyFinished",
            ForgeError::TaskMismatch { .. } => "TaskMismatch",
            ForgeError::Store(_) => "RefinementLogError",
            ForgeError::Sampler(_) => "SamplerError",
            ForgeError::Gateway(e) => e.class(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptTask {
    #[serde(rename = "NER-gen")]
    NerGen,
    #[serde(rename = "RE-gen")]
    ReGen,
    #[serde(rename = "NER-zeroshot")]
    NerZeroshot,
    #[serde(rename = "RE-zeroshot")]
    ReZeroshot,
}

impl PromptTask {
    pub fn required(self) -> BTreeSet<Placeholder> {
        match self {
            PromptTask::NerGen => [Placeholder::SeedEntities, Placeholder::Count].into(),
            PromptTask::ReGen => [Placeholder::SeedExamples].into(),
            PromptTask::NerZeroshot => [Placeholder::Text].into(),
            PromptTask::ReZeroshot => BTreeSet::new(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptTask::NerGen => "NER-gen",
            PromptTask::ReGen => "RE-gen",
            PromptTask::NerZeroshot => "NER-zeroshot",
            PromptTask::ReZeroshot => "RE-zeroshot",
        }
    }

    pub fn is_generation(self) -> bool {
        matches!(self, PromptTask::NerGen | PromptTask::ReGen)
    }

    /// Default `[Task Descriptions]` text for meta requests.
    pub fn default_description(self) -> &'static str {
        match self {
            PromptTask::NerGen => {
                "biomedical sentences that mention a given seed entity, for training a named entity recognition model"
            }
            PromptTask::ReGen => "labeled gene-disease relation extraction sentences",
            PromptTask::NerZeroshot => "biomedical named entity recognition with IOB output",
            PromptTask::ReZeroshot => "gene-disease relation classification with a Yes or No answer",
        }
    }
}

impl fmt::Display for PromptTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ner-gen" => Ok(PromptTask::NerGen),
            "re-gen" => Ok(PromptTask::ReGen),
            "ner-zeroshot" => Ok(PromptTask::NerZeroshot),
            "re-zeroshot" => Ok(PromptTask::ReZeroshot),
            other => Err(format!("unknown prompt task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placeholder {
    #[serde(rename = "@TEXT")]
    Text,
    #[serde(rename = "[Seed Entities]")]
    SeedEntities,
    #[serde(rename = "[Seed Examples]")]
    SeedExamples,
    #[serde(rename = "[Task Descriptions]")]
    TaskDescriptions,
    /// The requested sentence count, written as a standalone `N`.
    #[serde(rename = "N")]
    Count,
}

impl Placeholder {
    pub fn literal(self) -> &'static str {
        match self {
            Placeholder::Text => "@TEXT",
            Placeholder::SeedEntities => "[Seed Entities]",
            Placeholder::SeedExamples => "[Seed Examples]",
            Placeholder::TaskDescriptions => "[Task Descriptions]",
            Placeholder::Count => "N",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.literal())
    }
}

const DELIMITED: [Placeholder; 4] = [
    Placeholder::Text,
    Placeholder::SeedEntities,
    Placeholder::SeedExamples,
    Placeholder::TaskDescriptions,
];

/// `N` counts only when it is a word of its own: "provide N sentences"
/// but not "NER" or "N-terminal".
fn standalone_n(body: &str, at: usize) -> bool {
    let joins = |c: char| c.is_alphanumeric() || matches!(c, '_' | '-' | '@' | '$' | '\'');
    let before = body[..at].chars().next_back();
    let after = body[at + 1..].chars().next();
    !before.is_some_and(joins) && !after.is_some_and(joins)
}

/// Placeholder occurrences as `(byte start, byte end, placeholder)`.
pub fn scan_placeholders(body: &str) -> Vec<(usize, usize, Placeholder)> {
    let mut found = Vec::new();
    let mut i = 0;
    while i < body.len() {
        let rest = &body[i..];
        if let Some(p) = DELIMITED.iter().find(|p| rest.starts_with(p.literal())) {
            let end = i + p.literal().len();
            found.push((i, end, *p));
            i = end;
            continue;
        }
        if rest.starts_with('N') && standalone_n(body, i) {
            found.push((i, i + 1, Placeholder::Count));
        }
        i += rest.chars().next().map_or(1, char::len_utf8);
    }
    found
}

pub fn placeholders_in(body: &str) -> BTreeSet<Placeholder> {
    scan_placeholders(body).into_iter().map(|(_, _, p)| p).collect()
}

/// A candidate or selected prompt. The body carries exactly the
/// placeholders its task requires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub task: PromptTask,
    pub body: String,
    pub round: u32,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        task: PromptTask,
        body: impl Into<String>,
        round: u32,
    ) -> Result<Self, ForgeError> {
        let body = body.into();
        let present = placeholders_in(&body);
        let required = task.required();
        if present != required {
            return Err(ForgeError::PlaceholderMismatch {
                task,
                missing: required.difference(&present).copied().collect(),
                unexpected: present.difference(&required).copied().collect(),
            });
        }
        Ok(PromptTemplate {
            id: id.into(),
            task,
            body,
            round,
        })
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, ForgeError> {
        render(self, bindings)
    }
}

pub type Bindings = BTreeMap<Placeholder, String>;

/// Substitute every placeholder in one pass. Bound values are inserted
/// verbatim and never re-scanned.
pub fn render(template: &PromptTemplate, bindings: &Bindings) -> Result<String, ForgeError> {
    render_body(&template.body, bindings)
}

pub fn render_body(body: &str, bindings: &Bindings) -> Result<String, ForgeError> {
    let found = scan_placeholders(body);
    let present: BTreeSet<Placeholder> = found.iter().map(|&(_, _, p)| p).collect();
    if let Some(p) = present.iter().find(|p| !bindings.contains_key(p)) {
        return Err(ForgeError::UnboundPlaceholder(*p));
    }
    if let Some(p) = bindings.keys().find(|p| !present.contains(p)) {
        return Err(ForgeError::UnknownPlaceholder(*p));
    }
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for (start, end, p) in found {
        out.push_str(&body[last..start]);
        out.push_str(&bindings[&p]);
        last = end;
    }
    out.push_str(&body[last..]);
    Ok(out)
}

/// Stock templates: the zero-shot task prompts and the generation prompts
/// used when no refinement log is supplied.
pub mod builtin {
    use super::{PromptTask, PromptTemplate};

    pub const NER_ZEROSHOT: &str = "Please do NER task for \"@TEXT\" (output IOB format, please output the results only without your explanation, use tab key to separate the word and label, the entity is disease name, please use the space key to separate the sentences)";

    pub const RE_ZEROSHOT: &str = "Given a sentence that introduces a gene (denoted as \"@GENE$\") and a disease (denoted as \"@DISEASE$\"), predict whether the gene and disease have a relation or not. The relation between the gene and disease can be any functional, causal, or associative connection. If there is a relation, then the label should be \"Yes\", otherwise \"No\".";

    pub const NER_GEN: &str = "Please act as a sentence generator for the biological domain and provide N sentences containing the words [Seed Entities]. These sentences should not include any additional information or explanation. Generated sentences should mimic the style of PubMed journal articles, using a variety of sentence structures:";

    pub const RE_GEN: &str = "Generate 3 positive and 3 negative examples for the gene-disease relation extraction task. The target gene is denoted as \"@GENE$\" and the target disease is denoted as \"@DISEASE$\". The label is whether there is a relation between the target gene and disease. The relationship can be any functional, causal, or associative connection. If there is a relation, then the label should be \"Yes\". If there is no relation, the label should be \"No\". Sentences mimic the style of PubMed journal articles with various sentence structures. Seed examples:\n[Seed Examples]";

    /// NER zero-shot prompt for another entity type, e.g. "chemical".
    pub fn ner_zeroshot_for(entity_description: &str) -> PromptTemplate {
        let body = NER_ZEROSHOT.replace(
            "the entity is disease name",
            &format!("the entity is {entity_description} name"),
        );
        PromptTemplate::new("builtin-ner-zeroshot", PromptTask::NerZeroshot, body, 0)
            .expect("builtin template is valid")
    }

    pub fn template(task: PromptTask) -> PromptTemplate {
        let (id, body) = match task {
            PromptTask::NerGen => ("builtin-ner-gen", NER_GEN),
            PromptTask::ReGen => ("builtin-re-gen", RE_GEN),
            PromptTask::NerZeroshot => ("builtin-ner-zeroshot", NER_ZEROSHOT),
            PromptTask::ReZeroshot => ("builtin-re-zeroshot", RE_ZEROSHOT),
        };
        PromptTemplate::new(id, task, body, 0).expect("builtin template is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bind(pairs: &[(Placeholder, &str)]) -> Bindings {
        pairs.iter().map(|&(p, v)| (p, v.to_string())).collect()
    }

    #[test]
    fn builtins_satisfy_their_invariant() {
        for task in [
            PromptTask::NerGen,
            PromptTask::ReGen,
            PromptTask::NerZeroshot,
            PromptTask::ReZeroshot,
        ] {
            let t = builtin::template(task);
            assert_eq!(placeholders_in(&t.body), task.required(), "{task}");
        }
    }

    #[test]
    fn ner_zeroshot_render() {
        let t = builtin::template(PromptTask::NerZeroshot);
        let out = render(
            &t,
            &bind(&[(
                Placeholder::Text,
                "The symptoms suggest a possible case of rheumatoid arthritis.",
            )]),
        )
        .unwrap();
        assert!(out.starts_with("Please do NER task for \"The symptoms suggest"));
        assert!(!out.contains("@TEXT"));
    }

    #[test]
    fn ner_gen_render() {
        let t = builtin::template(PromptTask::NerGen);
        let out = render(
            &t,
            &bind(&[
                (Placeholder::SeedEntities, "familial adenomatous polyposis"),
                (Placeholder::Count, "30"),
            ]),
        )
        .unwrap();
        assert!(out.contains("30 sentences"));
        assert!(out.contains("containing the words familial adenomatous polyposis."));
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = builtin::template(PromptTask::ReZeroshot);
        assert_eq!(render(&t, &Bindings::new()).unwrap(), t.body);
    }

    #[test]
    fn unbound_and_unknown() {
        let t = builtin::template(PromptTask::NerGen);
        assert_eq!(
            render(&t, &bind(&[(Placeholder::SeedEntities, "x")])),
            Err(ForgeError::UnboundPlaceholder(Placeholder::Count))
        );
        let t = builtin::template(PromptTask::ReZeroshot);
        assert_eq!(
            render(&t, &bind(&[(Placeholder::Text, "x")])),
            Err(ForgeError::UnknownPlaceholder(Placeholder::Text))
        );
    }

    #[test]
    fn standalone_n_detection() {
        assert_eq!(placeholders_in("provide N sentences"), [Placeholder::Count].into());
        assert!(placeholders_in("NER task, N-terminal, DNA, No.").is_empty());
        assert_eq!(placeholders_in("(N)"), [Placeholder::Count].into());
    }

    #[test]
    fn template_invariant_enforced() {
        assert!(matches!(
            PromptTemplate::new("x", PromptTask::NerGen, "write N sentences", 1),
            Err(ForgeError::PlaceholderMismatch { .. })
        ));
        assert!(matches!(
            PromptTemplate::new("x", PromptTask::ReZeroshot, "classify @TEXT", 1),
            Err(ForgeError::PlaceholderMismatch { .. })
        ));
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let out = render_body("see @TEXT", &bind(&[(Placeholder::Text, "[Seed Entities] N")])).unwrap();
        assert_eq!(out, "see [Seed Entities] N");
    }

    proptest! {
        #[test]
        fn render_without_placeholders_is_idempotent(s in "[a-z .,]{0,40}", v in "[a-z ]{0,20}") {
            let body = format!("start @TEXT {s}");
            let once = render_body(&body, &bind(&[(Placeholder::Text, &v)])).unwrap();
            prop_assume!(placeholders_in(&once).is_empty());
            let twice = render_body(&once, &Bindings::new()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
