//! Deterministic offline provider.
//!
//! The reply is a pure function of the request and the seed. The mock
//! recognizes the prompt shapes built by `prompt_forge`: meta / augmentation
//! requests, NER and RE generation prompts, and the two zero-shot task
//! prompts. A per-line corruption rate replaces well-formed lines with
//! lines every downstream parser rejects.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{cache_key, ChatRequest, ChatResponse, ProviderKind};
use crate::corpus::tokenize;
use crate::prompt_forge::phrases;

#[derive(Debug, Clone, PartialEq)]
pub struct MockProvider {
    pub seed: u64,
    pub corruption_rate: f64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider {
            seed,
            corruption_rate: 0.0,
        }
    }

    pub fn with_corruption(mut self, rate: f64) -> Self {
        self.corruption_rate = rate.clamp(0.0, 1.0);
        self
    }

    fn rng(&self, request: &ChatRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(cache_key(request).as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    pub fn reply(&self, request: &ChatRequest) -> String {
        let mut rng = self.rng(request);
        let text = request.user_text();
        let rate = self.corruption_rate;
        if text.contains(phrases::META_OPENING) || text.contains(phrases::AUGMENT_OPENING) {
            meta_reply(&text, &mut rng)
        } else if let Some((n, seed)) = ner_generation_request(&text) {
            ner_generation(&seed, n, rate, &mut rng)
        } else if text.contains(phrases::RE_GEN_MARKER) {
            let (pos, neg) = re_generation_counts(&text);
            re_generation(pos, neg, rate, &mut rng)
        } else if let Some(sentence) = ner_task_sentence(&text) {
            ner_task(&sentence, &entity_type_hint(&text), rate, &mut rng)
        } else if text.contains(phrases::RE_TASK_MARKER) {
            re_task(&text, rate, &mut rng)
        } else {
            "I'm sorry, but I can't help with that request.".to_string()
        }
    }
}

/// Mock completion without corruption.
pub fn mock_complete(request: &ChatRequest, seed: u64) -> ChatResponse {
    ChatResponse {
        content: MockProvider::new(seed).reply(request),
        provider: ProviderKind::Mock,
        cached: false,
        latency_ms: 0,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty vocabulary")
}

const FINDINGS: &[&str] = &[
    "elevated serum IL-6 levels",
    "reduced bone mineral density",
    "impaired glucose tolerance",
    "progressive muscle weakness",
    "increased oxidative stress",
    "abnormal liver function tests",
    "recurrent infections",
    "decreased renal clearance",
    "marked lymphocytic infiltration",
    "prolonged QT intervals",
    "cognitive decline",
    "persistent proteinuria",
];
const CONTROLS: &[&str] = &[
    "healthy controls",
    "age-matched controls",
    "unaffected siblings",
    "population controls",
    "placebo-treated patients",
    "untreated subjects",
];
const POPULATIONS: &[&str] = &[
    "Korean adults",
    "European children",
    "postmenopausal women",
    "elderly patients",
    "hospitalized adults",
    "a Japanese cohort",
    "Brazilian families",
    "male smokers",
    "pregnant women",
    "adolescents with obesity",
];
const GENES: &[&str] = &[
    "BRCA1", "TP53", "APOE", "CFTR", "MTHFR", "PTEN", "HLA-B27", "IL10", "TNF", "ACE", "VEGFA", "NOD2",
];
const METHODS: &[&str] = &[
    "Immunohistochemical analysis",
    "Whole-exome sequencing",
    "Magnetic resonance imaging",
    "Flow cytometry",
    "Histopathological examination",
    "Longitudinal follow-up",
];
const DESIGNS: &[&str] = &[
    "case-control",
    "prospective",
    "retrospective",
    "cross-sectional",
    "population-based",
];
const OUTCOMES: &[&str] = &[
    "hospital readmission",
    "cardiovascular events",
    "all-cause mortality",
    "renal failure",
    "disease progression",
    "treatment failure",
    "tumor recurrence",
    "postoperative complications",
];
const REASONS: &[&str] = &[
    "its heterogeneous presentation",
    "the lack of specific biomarkers",
    "overlapping clinical features",
    "limited access to genetic testing",
    "its insidious onset",
    "variable penetrance",
];
const DRUGS: &[&str] = &[
    "methotrexate",
    "metformin",
    "rituximab",
    "tamoxifen",
    "prednisone",
    "atorvastatin",
    "cisplatin",
    "lisinopril",
];
const MECHANISMS: &[&str] = &[
    "aberrant NF-kB signaling",
    "mitochondrial dysfunction",
    "defective DNA repair",
    "chronic inflammation",
    "impaired autophagy",
    "epigenetic silencing",
    "altered lipid metabolism",
    "T-cell dysregulation",
];
const EXPOSURES: &[&str] = &[
    "prolonged corticosteroid therapy",
    "occupational solvent exposure",
    "the introduction of screening programs",
    "radiation therapy",
    "viral infection",
    "rapid weight gain",
];

fn fill(template: &str, seed: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').expect("closed slot") + open;
        let slot = &rest[open + 1..close];
        let value = match slot {
            "E" => seed.to_string(),
            "finding" => pick(rng, FINDINGS).to_string(),
            "control" => pick(rng, CONTROLS).to_string(),
            "pop" => pick(rng, POPULATIONS).to_string(),
            "gene" => pick(rng, GENES).to_string(),
            "Method" => pick(rng, METHODS).to_string(),
            "design" => pick(rng, DESIGNS).to_string(),
            "outcome" => pick(rng, OUTCOMES).to_string(),
            "reason" => pick(rng, REASONS).to_string(),
            "drug" => pick(rng, DRUGS).to_string(),
            "mechanism" => pick(rng, MECHANISMS).to_string(),
            "exposure" => pick(rng, EXPOSURES).to_string(),
            "num" => rng.random_range(40..5000u32).to_string(),
            "pct" => format!("{}.{}", rng.random_range(1..60u32), rng.random_range(0..10u32)),
            "or" => format!("{}.{:02}", rng.random_range(1..4u32), rng.random_range(0..100u32)),
            "p" => format!("0.{:02}", rng.random_range(6..100u32)),
            other => panic!("unknown slot {other}"),
        };
        out.push_str(&value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

const NER_TEMPLATES: &[&str] = &[
    "Patients with {E} showed {finding} compared with {control}.",
    "In {pop}, {E} was associated with {finding}.",
    "The prevalence of {E} was {pct}% among {pop}.",
    "We examined the role of {gene} in the pathogenesis of {E}.",
    "{Method} revealed that {E} is frequently accompanied by {finding}.",
    "A {design} study of {num} participants identified {E} as a risk factor for {outcome}.",
    "Clinical features of {E} include {finding} and {finding}.",
    "These results suggest that {gene} variants contribute to {E} susceptibility in {pop}.",
    "Early diagnosis of {E} remains challenging because of {reason}.",
    "Treatment with {drug} reduced the risk of {outcome} in patients with {E}.",
    "Our data indicate that {E} is linked to {mechanism}.",
    "The molecular basis of {E} involves {mechanism} and {mechanism}.",
    "Among {num} {pop}, {pct}% were diagnosed with {E} during follow-up.",
    "Mutations in {gene} have been reported in families affected by {E}.",
    "The incidence of {E} increased significantly after {exposure}.",
    "Serum markers of {mechanism} were measured in {num} cases of {E}.",
];

const RE_POSITIVE: &[&str] = &[
    "Our analysis showed that @GENE$ expression is strongly associated with @DISEASE$ in {pop}.",
    "The rs{num} polymorphism of @GENE$ was significantly associated with an increased risk of @DISEASE$ (OR = {or}).",
    "Overexpression of @GENE$ promoted @DISEASE$ progression through {mechanism}.",
    "These findings indicate that @GENE$ is directly involved in the etiology of @DISEASE$ among {pop}.",
    "Carriers of the @GENE$ risk allele had a {or}-fold higher risk of developing @DISEASE$.",
    "Functional loss of @GENE$ contributes to @DISEASE$ via {mechanism} in a {design} cohort.",
    "A {design} study of {num} subjects confirmed that @GENE$ variants predispose to @DISEASE$.",
];

const RE_NEGATIVE: &[&str] = &[
    "No significant association was found between @GENE$ and @DISEASE$ in {pop}.",
    "The @GENE$ polymorphism was not associated with susceptibility to @DISEASE$ (P = {p}).",
    "We found no evidence that @GENE$ expression differs between patients with @DISEASE$ and {control}.",
    "Genotype frequencies of @GENE$ did not differ between @DISEASE$ cases and {control} (P = {p}).",
    "Our results do not support a role for @GENE$ in the pathogenesis of @DISEASE$ in a {design} sample of {num} subjects.",
    "After adjustment for {exposure}, the link between @GENE$ and @DISEASE$ was not significant (P = {p}).",
    "In {num} {pop}, variation in @GENE$ showed no relation to @DISEASE$ risk.",
];

/// `(N, seed surface)` of an NER generation prompt.
fn ner_generation_request(text: &str) -> Option<(usize, String)> {
    let at = text.find(phrases::NER_GEN_MARKER)?;
    let n = text[..at]
        .split_whitespace()
        .last()
        .and_then(|w| w.parse::<usize>().ok())
        .unwrap_or(10);
    let after = &text[at + phrases::NER_GEN_MARKER.len()..];
    let end = [". ", ".\n", ":", "\n"]
        .iter()
        .filter_map(|t| after.find(t))
        .min()
        .unwrap_or(after.len());
    let seed = after[..end].trim().trim_end_matches('.').trim();
    (!seed.is_empty()).then(|| (n, seed.to_string()))
}

fn ner_generation(seed: &str, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut lines = Vec::with_capacity(n);
    for i in 0..n {
        let sentence = if rng.random_bool(rate) {
            "[generation interrupted]".to_string()
        } else {
            let template = pick(rng, NER_TEMPLATES);
            fill(template, seed, rng)
        };
        lines.push(format!("{}. {}", i + 1, sentence));
    }
    lines.join("\n")
}

fn re_generation_counts(text: &str) -> (usize, usize) {
    let words: Vec<&str> = text.split_whitespace().collect();
    let count_before = |kw: &str| {
        words
            .windows(2)
            .find(|w| w[1] == kw)
            .and_then(|w| w[0].parse::<usize>().ok())
    };
    (
        count_before("positive").unwrap_or(3),
        count_before("negative").unwrap_or(3),
    )
}

fn re_generation(pos: usize, neg: usize, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let mut lines = Vec::new();
    for (count, templates, label) in [(pos, RE_POSITIVE, "Yes"), (neg, RE_NEGATIVE, "No")] {
        for _ in 0..count {
            let sentence = fill(pick(rng, templates), "", rng);
            if rng.random_bool(rate) {
                lines.push(format!("|{sentence}|"));
            } else {
                lines.push(format!("|{sentence}|{label}|"));
            }
        }
    }
    lines.join("\n")
}

fn ner_task_sentence(text: &str) -> Option<String> {
    let at = text.find(phrases::NER_TASK_MARKER)?;
    let after = &text[at + phrases::NER_TASK_MARKER.len()..];
    let end = after.rfind("\" (").or_else(|| after.rfind('"'))?;
    Some(after[..end].to_string())
}

fn entity_type_hint(text: &str) -> String {
    let lower = text.to_lowercase();
    let Some(at) = lower.find("the entity is ") else {
        return "Disease".into();
    };
    let word = lower[at + "the entity is ".len()..]
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("disease");
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => "Disease".into(),
    }
}

const DISEASE_HEADS: &[&str] = &[
    "cancer",
    "carcinoma",
    "syndrome",
    "disease",
    "disorder",
    "disorders",
    "deficiency",
    "tumor",
    "tumors",
    "diabetes",
    "polyposis",
    "dystrophy",
    "anemia",
    "infection",
];
const DISEASE_SUFFIXES: &[&str] = &["itis", "osis", "oma", "emia", "pathy", "plasia", "trophy"];
const MODIFIER_SUFFIXES: &[&str] = &["oid", "al", "ic", "ous", "ary", "ial", "ive", "ian"];
const CHEMICAL_SUFFIXES: &[&str] = &[
    "ine", "ol", "ide", "ate", "mab", "pril", "statin", "platin", "sone", "azole",
];

fn is_head(word: &str, entity_type: &str) -> bool {
    let w = word.to_lowercase();
    if w.len() < 4 || !w.chars().all(|c| c.is_alphabetic() || c == '-') {
        return false;
    }
    if entity_type.eq_ignore_ascii_case("chemical") {
        CHEMICAL_SUFFIXES.iter().any(|s| w.ends_with(s))
    } else {
        DISEASE_HEADS.contains(&w.as_str()) || DISEASE_SUFFIXES.iter().any(|s| w.ends_with(s))
    }
}

fn is_modifier(word: &str) -> bool {
    let w = word.to_lowercase();
    w.len() > 4 && w.chars().all(char::is_alphabetic) && MODIFIER_SUFFIXES.iter().any(|s| w.ends_with(s))
}

fn ner_task(sentence: &str, entity_type: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    let words: Vec<String> = tokenize(sentence).into_iter().map(|t| t.text).collect();
    let mut tags = vec![String::from("O"); words.len()];
    for i in 0..words.len() {
        if is_head(&words[i], entity_type) {
            let mut start = i;
            while start > 0 && tags[start - 1] == "O" && is_modifier(&words[start - 1]) {
                start -= 1;
            }
            let continuing = start > 0 && tags[start - 1] != "O" && start == i;
            for (k, tag) in tags.iter_mut().enumerate().take(i + 1).skip(start) {
                *tag = if k == start && !continuing {
                    format!("B-{entity_type}")
                } else {
                    format!("I-{entity_type}")
                };
            }
        }
    }
    words
        .iter()
        .zip(&tags)
        .map(|(w, t)| {
            if rng.random_bool(rate) {
                format!("{w} => ???")
            } else {
                format!("{w}\t{t}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn re_task(text: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(rate) {
        return "It depends on the context.".to_string();
    }
    let tail = text
        .rsplit_once(phrases::RE_TASK_MARKER)
        .map_or(text, |(_, t)| t)
        .to_lowercase();
    let negated = [
        " no ",
        " not ",
        "no significant",
        " nor ",
        "did not",
        "does not",
        "no evidence",
        "no relation",
    ]
    .iter()
    .any(|cue| tail.contains(cue));
    if negated { "No." } else { "Yes." }.to_string()
}

/// Five numbered candidate templates for the task named by the meta
/// request's required-placeholder line.
fn meta_reply(text: &str, rng: &mut ChaCha8Rng) -> String {
    let required = text
        .lines()
        .find_map(|l| l.trim().strip_prefix(phrases::REQUIRED_PLACEHOLDERS_LABEL))
        .unwrap_or("");
    let pool: &[&str] = if required.contains("[Seed Entities]") {
        &[
            "Please act as a sentence generator for the biological domain and provide N sentences containing the words [Seed Entities]. These sentences should not include any additional information or explanation. Generated sentences should mimic the style of PubMed journal articles, using a variety of sentence structures:",
            "Write N sentences containing the words [Seed Entities]. Each sentence should read like a line from a PubMed abstract and stand on its own.",
            "As a biomedical writer, provide N sentences containing the words [Seed Entities]. Vary the sentence structure and do not add explanations.",
            "Generate N sentences containing the words [Seed Entities] in the style of clinical research articles. Output one sentence per line.",
            "You are generating training data for biomedical NER. Produce N sentences containing the words [Seed Entities]. Avoid repeating sentence openings.",
            "List N sentences containing the words [Seed Entities]. Use formal scientific language typical of journal abstracts.",
            "Compose N sentences containing the words [Seed Entities]. Mix findings, methods and background statements.",
        ]
    } else if required.contains("[Seed Examples]") {
        &[
            "Generate 3 positive and 3 negative examples for the gene-disease relation extraction task. The target gene is denoted as \"@GENE$\" and the target disease is denoted as \"@DISEASE$\". If there is a relation, the label should be \"Yes\", otherwise \"No\". Seed examples: [Seed Examples]",
            "Using the rows below as style references, generate 3 positive and 3 negative examples for the gene-disease relation extraction task in |sentence|label| format. Seed examples: [Seed Examples]",
            "Write new rows for the gene-disease relation extraction task: generate 3 positive and 3 negative examples mentioning \"@GENE$\" and \"@DISEASE$\" once each. Seed examples: [Seed Examples]",
            "Act as a PubMed author and generate 3 positive and 3 negative examples for the gene-disease relation extraction task, labeled Yes or No. Seed examples: [Seed Examples]",
            "Following the format |sentence|label|, generate 3 positive and 3 negative examples for the gene-disease relation extraction task with varied sentence structures. Seed examples: [Seed Examples]",
            "Generate 3 positive and 3 negative examples for the gene-disease relation extraction task; positives describe functional, causal or associative links. Seed examples: [Seed Examples]",
        ]
    } else if required.contains("@TEXT") {
        &[
            "Please do NER task for \"@TEXT\" (output IOB format, please output the results only without your explanation, use tab key to separate the word and label, the entity is disease name, please use the space key to separate the sentences)",
            "Please do NER task for \"@TEXT\" (tag every word with B-Disease, I-Disease or O, one word and tab and label per line, the entity is disease name)",
            "Please do NER task for \"@TEXT\" (return IOB tags only, word<TAB>label per line, the entity is disease name)",
            "Please do NER task for \"@TEXT\" (identify disease mentions in IOB format, no explanation, the entity is disease name)",
            "Please do NER task for \"@TEXT\" (label each token using the IOB scheme, separated by a tab, the entity is disease name)",
            "Please do NER task for \"@TEXT\" (output IOB format only, the entity is disease name, keep the original tokens)",
        ]
    } else {
        &[
            "Given a sentence that introduces a gene (denoted as \"@GENE$\") and a disease (denoted as \"@DISEASE$\"), predict whether the gene and disease have a relation or not. If there is a relation, then the label should be \"Yes\", otherwise \"No\".",
            "Read the sentence and predict whether the gene and disease have a relation or not. Answer \"Yes\" or \"No\" only.",
            "You are a biomedical curator. Predict whether the gene and disease have a relation or not, answering Yes or No.",
            "Decide if the sentence states a link: predict whether the gene and disease have a relation or not. Reply with Yes or No.",
            "Predict whether the gene and disease have a relation or not; any functional, causal or associative connection counts as Yes.",
            "For the sentence below, predict whether the gene and disease have a relation or not and output only the label.",
        ]
    };
    let mut chosen: Vec<&str> = pool.to_vec();
    chosen.shuffle(rng);
    chosen
        .iter()
        .take(5)
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}
