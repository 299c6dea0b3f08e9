use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{phrases, ForgeError, PromptTask, PromptTemplate};
use crate::llm_gateway::{ChatRequest, Gateway, DEFAULT_MODEL, GENERATION_TEMPERATURE};

pub const CANDIDATES_PER_ROUND: usize = 5;
pub const DEFAULT_ROUND_BUDGET: u32 = 3;
pub const DEFAULT_SAMPLES_PER_CANDIDATE: usize = 10;

fn requirements_line(task: PromptTask) -> String {
    let required: Vec<&str> = task.required().iter().map(|p| p.literal()).collect();
    let listed = if required.is_empty() {
        "none".to_string()
    } else {
        required.join(", ")
    };
    format!("{} {listed}", phrases::REQUIRED_PLACEHOLDERS_LABEL)
}

fn purpose(task: PromptTask, description: &str) -> String {
    if task.is_generation() {
        format!("generate data samples of {description}")
    } else {
        format!("address {description}")
    }
}

const LIST_INSTRUCTION: &str =
    "Write each placeholder exactly as shown. Answer with a numbered list, one prompt per item.";

/// First-round request asking the model for five candidate prompts.
pub fn meta_prompt(task: PromptTask, description: &str) -> ChatRequest {
    let text = format!(
        "{} {}.\n{}\n{LIST_INSTRUCTION}",
        phrases::META_OPENING,
        purpose(task, description),
        requirements_line(task)
    );
    ChatRequest::user(text, GENERATION_TEMPERATURE)
}

/// Later-round request: five variations on the previous winner.
pub fn augment_prompt(task: PromptTask, description: &str, best: &PromptTemplate) -> ChatRequest {
    let text = format!(
        "{} to {}.\nPrevious best prompt:\n{}\n{}\n{LIST_INSTRUCTION}",
        phrases::AUGMENT_OPENING,
        purpose(task, description),
        best.body,
        requirements_line(task)
    );
    ChatRequest::user(text, GENERATION_TEMPERATURE)
}

/// Item marker at the start of a line: `1.`, `1)`, `- ` or `* `.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return Some(rest);
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = t[digits..]
        .strip_prefix('.')
        .or_else(|| t[digits..].strip_prefix(')'))?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            if !inner.contains(close) {
                return inner.trim();
            }
        }
    }
    s
}

/// Splits a list reply into candidate templates. Lines before the first
/// marker are ignored. A non-blank line directly after an item continues
/// it; a blank line closes it.
pub fn parse_candidates(reply: &str, task: PromptTask, round: u32) -> Result<Vec<PromptTemplate>, ForgeError> {
    let mut items: Vec<String> = Vec::new();
    let mut open = false;
    for line in reply.lines() {
        if let Some(rest) = strip_marker(line) {
            items.push(rest.trim().to_string());
            open = true;
        } else if line.trim().is_empty() {
            open = false;
        } else if open {
            let last = items.last_mut().expect("open implies an item");
            last.push('\n');
            last.push_str(line.trim());
        }
    }
    items.retain(|i| !unquote(i).is_empty());
    if items.is_empty() {
        return Err(ForgeError::UnparseableReply);
    }
    if items.len() != CANDIDATES_PER_ROUND {
        return Err(ForgeError::CandidateCountMismatch {
            expected: CANDIDATES_PER_ROUND,
            found: items.len(),
        });
    }
    items
        .iter()
        .enumerate()
        .map(|(i, body)| PromptTemplate::new(format!("r{round}-c{}", i + 1), task, unquote(body), round))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    AwaitingSamples,
    AwaitingSelection,
    Closed,
}

impl fmt::Display for RoundStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundStatus::AwaitingSamples => "awaiting-samples",
            RoundStatus::AwaitingSelection => "awaiting-selection",
            RoundStatus::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundState {
    pub round: u32,
    pub candidates: Vec<PromptTemplate>,
    /// Keyed by 1-based candidate number.
    pub samples: BTreeMap<usize, Vec<String>>,
    pub selected: Option<usize>,
    pub rationale: Option<String>,
}

impl RoundState {
    pub fn status(&self) -> RoundStatus {
        if self.selected.is_some() {
            RoundStatus::Closed
        } else if self.samples.len() == self.candidates.len() {
            RoundStatus::AwaitingSelection
        } else {
            RoundStatus::AwaitingSamples
        }
    }

    pub fn candidate(&self, number: usize) -> Option<&PromptTemplate> {
        number.checked_sub(1).and_then(|i| self.candidates.get(i))
    }
}

/// One line of the persisted refinement log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ForgeEvent {
    Started {
        task: PromptTask,
        description: String,
        budget: u32,
        samples_per_candidate: usize,
    },
    RoundOpened {
        round: u32,
        candidates: Vec<PromptTemplate>,
    },
    SamplesRecorded {
        round: u32,
        candidate: usize,
        samples: Vec<String>,
    },
    Selected {
        round: u32,
        candidate: usize,
        rationale: String,
    },
    Finalized {
        prompt: PromptTemplate,
    },
}

pub enum Advance {
    /// Another round follows; the request asks for its candidates.
    Continue {
        augment: ChatRequest,
    },
    Finished(PromptTemplate),
}

/// Replayable state of one refinement session. Every mutation goes
/// through [`RefinementLog::apply`], which enforces the round lifecycle
/// `awaiting-samples -> awaiting-selection -> closed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementLog {
    pub task: PromptTask,
    pub description: String,
    pub budget: u32,
    pub samples_per_candidate: usize,
    pub rounds: Vec<RoundState>,
    pub final_prompt: Option<PromptTemplate>,
    events: Vec<ForgeEvent>,
}

impl RefinementLog {
    pub fn new(task: PromptTask, description: &str, budget: u32, samples_per_candidate: usize) -> Self {
        let started = ForgeEvent::Started {
            task,
            description: description.to_string(),
            budget: budget.max(1),
            samples_per_candidate,
        };
        RefinementLog {
            task,
            description: description.to_string(),
            budget: budget.max(1),
            samples_per_candidate,
            rounds: Vec::new(),
            final_prompt: None,
            events: vec![started],
        }
    }

    pub fn from_events(events: impl IntoIterator<Item = ForgeEvent>) -> Result<Self, ForgeError> {
        let mut events = events.into_iter();
        let mut log = match events.next() {
            Some(ForgeEvent::Started {
                task,
                description,
                budget,
                samples_per_candidate,
            }) => RefinementLog::new(task, &description, budget, samples_per_candidate),
            _ => return Err(ForgeError::Store("log must begin with a started event".into())),
        };
        for event in events {
            log.apply(event)?;
        }
        Ok(log)
    }

    pub fn events(&self) -> &[ForgeEvent] {
        &self.events
    }

    pub fn current(&self) -> Option<&RoundState> {
        self.rounds.last()
    }

    pub fn is_finished(&self) -> bool {
        self.final_prompt.is_some()
    }

    /// The selected template of the most recent closed round.
    pub fn best(&self) -> Option<&PromptTemplate> {
        self.rounds
            .iter()
            .rev()
            .find_map(|r| r.selected.and_then(|n| r.candidate(n)))
    }

    fn current_mut(&mut self, round: u32) -> Result<&mut RoundState, ForgeError> {
        match self.rounds.last_mut() {
            Some(r) if r.round == round => Ok(r),
            _ => Err(ForgeError::Store(format!("round {round} is not the current round"))),
        }
    }

    pub fn apply(&mut self, event: ForgeEvent) -> Result<(), ForgeError> {
        if self.is_finished() {
            return Err(ForgeError::AlreadyFinished);
        }
        match &event {
            ForgeEvent::Started { .. } => {
                return Err(ForgeError::Store("duplicate started event".into()));
            }
            ForgeEvent::RoundOpened { round, candidates } => {
                if let Some(prev) = self.current() {
                    if prev.status() != RoundStatus::Closed {
                        return Err(ForgeError::RoundNotReady(prev.status()));
                    }
                }
                let expected = self.rounds.len() as u32 + 1;
                if *round != expected || *round > self.budget {
                    return Err(ForgeError::Store(format!(
                        "cannot open round {round}, expected {expected} within budget {}",
                        self.budget
                    )));
                }
                if candidates.len() != CANDIDATES_PER_ROUND {
                    return Err(ForgeError::CandidateCountMismatch {
                        expected: CANDIDATES_PER_ROUND,
                        found: candidates.len(),
                    });
                }
                if let Some(c) = candidates.iter().find(|c| c.task != self.task) {
                    return Err(ForgeError::TaskMismatch {
                        template: c.task,
                        expected: self.task,
                    });
                }
                self.rounds.push(RoundState {
                    round: *round,
                    candidates: candidates.clone(),
                    samples: BTreeMap::new(),
                    selected: None,
                    rationale: None,
                });
            }
            ForgeEvent::SamplesRecorded {
                round,
                candidate,
                samples,
            } => {
                let state = self.current_mut(*round)?;
                if state.status() != RoundStatus::AwaitingSamples {
                    return Err(ForgeError::RoundNotReady(state.status()));
                }
                if state.candidate(*candidate).is_none() {
                    return Err(ForgeError::InvalidSelection(*candidate));
                }
                state.samples.insert(*candidate, samples.clone());
            }
            ForgeEvent::Selected {
                round,
                candidate,
                rationale,
            } => {
                let state = self.current_mut(*round)?;
                if state.status() != RoundStatus::AwaitingSelection {
                    return Err(ForgeError::RoundNotReady(state.status()));
                }
                if state.candidate(*candidate).is_none() {
                    return Err(ForgeError::InvalidSelection(*candidate));
                }
                state.selected = Some(*candidate);
                state.rationale = Some(rationale.clone());
            }
            ForgeEvent::Finalized { prompt } => {
                if self.best() != Some(prompt) || self.current().map(RoundState::status) != Some(RoundStatus::Closed) {
                    return Err(ForgeError::Store("finalized prompt must be the last selection".into()));
                }
                self.final_prompt = Some(prompt.clone());
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn open_round(&mut self, candidates: Vec<PromptTemplate>) -> Result<(), ForgeError> {
        let round = self.rounds.len() as u32 + 1;
        self.apply(ForgeEvent::RoundOpened { round, candidates })
    }

    /// Records the human choice for the current round. Finalizes when the
    /// round budget is spent, otherwise returns the augmentation request
    /// for the next round.
    pub fn advance_round(&mut self, candidate: usize, rationale: &str) -> Result<Advance, ForgeError> {
        if self.is_finished() {
            return Err(ForgeError::AlreadyFinished);
        }
        let round = self
            .current()
            .ok_or(ForgeError::RoundNotReady(RoundStatus::AwaitingSamples))?
            .round;
        self.apply(ForgeEvent::Selected {
            round,
            candidate,
            rationale: rationale.to_string(),
        })?;
        let best = self.best().cloned().expect("selection just recorded");
        if round >= self.budget {
            self.apply(ForgeEvent::Finalized { prompt: best.clone() })?;
            Ok(Advance::Finished(best))
        } else {
            Ok(Advance::Continue {
                augment: augment_prompt(self.task, &self.description, &best),
            })
        }
    }
}

/// Produces the preview samples shown next to each candidate.
pub trait CandidateSampler {
    fn samples(&self, template: &PromptTemplate, count: usize, gateway: &Gateway) -> Result<Vec<String>, ForgeError>;
}

/// JSONL file holding the events of one [`RefinementLog`]. Saves rewrite
/// the file through a temporary sibling so a crash never leaves half a log.
#[derive(Debug, Clone)]
pub struct ForgeStore {
    path: PathBuf,
}

impl ForgeStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        ForgeStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Option<RefinementLog>, ForgeError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ForgeError::Store(format!("{}: {e}", self.path.display()))),
        };
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str::<ForgeEvent>(l)
                    .map_err(|e| ForgeError::Store(format!("{} line {}: {e}", self.path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        RefinementLog::from_events(events).map(Some)
    }

    pub fn save(&self, log: &RefinementLog) -> Result<(), ForgeError> {
        let err = |e: std::io::Error| ForgeError::Store(format!("{}: {e}", self.path.display()));
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(err)?;
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        let mut file = std::fs::File::create(&tmp).map_err(err)?;
        for event in log.events() {
            let line = serde_json::to_string(event).expect("event serializes");
            writeln!(file, "{line}").map_err(err)?;
        }
        file.sync_all().map_err(err)?;
        std::fs::rename(&tmp, &self.path).map_err(err)
    }
}

/// Drives a [`RefinementLog`] against a gateway, saving after every step
/// so an interrupted session resumes where it stopped.
pub struct Forge {
    store: ForgeStore,
    log: RefinementLog,
    model: String,
}

impl Forge {
    /// Resumes the log at `store` if present, otherwise starts a new one.
    pub fn open(
        store: ForgeStore,
        task: PromptTask,
        description: &str,
        budget: u32,
        samples_per_candidate: usize,
    ) -> Result<Self, ForgeError> {
        let log = match store.load()? {
            Some(log) if log.task == task => log,
            Some(log) => {
                return Err(ForgeError::TaskMismatch {
                    template: log.task,
                    expected: task,
                })
            }
            None => RefinementLog::new(task, description, budget, samples_per_candidate),
        };
        Ok(Forge {
            store,
            log,
            model: DEFAULT_MODEL.to_string(),
        })
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn log(&self) -> &RefinementLog {
        &self.log
    }

    pub fn store(&self) -> &ForgeStore {
        &self.store
    }

    fn request_candidates(&mut self, request: ChatRequest, gateway: &Gateway) -> Result<(), ForgeError> {
        let reply = gateway.complete(&request.with_model(self.model.clone()))?;
        let round = self.log.rounds.len() as u32 + 1;
        let candidates = parse_candidates(&reply.content, self.log.task, round)?;
        self.log.open_round(candidates)?;
        self.store.save(&self.log)
    }

    /// Brings the session to the next point that needs a human: opens the
    /// first round if needed and fills missing candidate samples.
    pub fn step(&mut self, gateway: &Gateway, sampler: &dyn CandidateSampler) -> Result<RoundStatus, ForgeError> {
        if self.log.is_finished() {
            return Ok(RoundStatus::Closed);
        }
        if self.log.rounds.is_empty() {
            self.store.save(&self.log)?;
            let request = meta_prompt(self.log.task, &self.log.description);
            self.request_candidates(request, gateway)?;
        }
        let state = self.log.current().expect("a round is open").clone();
        for (i, template) in state.candidates.iter().enumerate() {
            let number = i + 1;
            if state.samples.contains_key(&number) {
                continue;
            }
            let samples = sampler.samples(template, self.log.samples_per_candidate, gateway)?;
            self.log.apply(ForgeEvent::SamplesRecorded {
                round: state.round,
                candidate: number,
                samples,
            })?;
            self.store.save(&self.log)?;
        }
        Ok(self
            .log
            .current()
            .map_or(RoundStatus::AwaitingSamples, RoundState::status))
    }

    /// Applies a selection and, unless the budget is spent, opens and
    /// samples the next round.
    pub fn select(
        &mut self,
        candidate: usize,
        rationale: &str,
        gateway: &Gateway,
        sampler: &dyn CandidateSampler,
    ) -> Result<Option<PromptTemplate>, ForgeError> {
        let mut trial = self.log.clone();
        let advance = trial.advance_round(candidate, rationale)?;
        self.log = trial;
        self.store.save(&self.log)?;
        match advance {
            Advance::Finished(prompt) => Ok(Some(prompt)),
            Advance::Continue { augment } => {
                self.request_candidates(augment, gateway)?;
                self.step(gateway, sampler)?;
                Ok(None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::MockProvider;

    fn five(task: PromptTask, round: u32) -> Vec<PromptTemplate> {
        let body = super::super::builtin::template(task).body;
        (1..=5)
            .map(|i| PromptTemplate::new(format!("r{round}-c{i}"), task, body.clone(), round).unwrap())
            .collect()
    }

    fn fill(log: &mut RefinementLog) {
        let round = log.current().unwrap().round;
        for c in 1..=5 {
            log.apply(ForgeEvent::SamplesRecorded {
                round,
                candidate: c,
                samples: vec![format!("sample {c}")],
            })
            .unwrap();
        }
    }

    #[test]
    fn markers() {
        assert_eq!(strip_marker("1. a"), Some(" a"));
        assert_eq!(strip_marker("  12) b"), Some(" b"));
        assert_eq!(strip_marker("- c"), Some("c"));
        assert_eq!(strip_marker("1.5 mg"), None);
        assert_eq!(strip_marker("Here"), None);
    }

    #[test]
    fn parses_numbered_reply_with_preamble_and_continuations() {
        let reply = "Here are five prompts:\n\n1. \"Classify @TEXT now\"\n2) Tag @TEXT\n   in IOB\n- Label @TEXT\n4. Mark @TEXT\n\n5. Find @TEXT\n\nHope this helps.";
        let c = parse_candidates(reply, PromptTask::NerZeroshot, 2).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c[0].body, "Classify @TEXT now");
        assert_eq!(c[1].body, "Tag @TEXT\nin IOB");
        assert_eq!(c[4].id, "r2-c5");
    }

    #[test]
    fn count_and_shape_errors() {
        assert_eq!(
            parse_candidates("1. a @TEXT\n2. b @TEXT", PromptTask::NerZeroshot, 1),
            Err(ForgeError::CandidateCountMismatch { expected: 5, found: 2 })
        );
        assert_eq!(
            parse_candidates("I cannot help with that.", PromptTask::NerZeroshot, 1),
            Err(ForgeError::UnparseableReply)
        );
    }

    #[test]
    fn lifecycle_and_errors() {
        let mut log = RefinementLog::new(PromptTask::NerGen, "x", 3, 10);
        log.open_round(five(PromptTask::NerGen, 1)).unwrap();
        assert!(matches!(
            log.advance_round(1, "r"),
            Err(ForgeError::RoundNotReady(RoundStatus::AwaitingSamples))
        ));
        fill(&mut log);
        assert!(matches!(
            log.advance_round(6, "r"),
            Err(ForgeError::InvalidSelection(6))
        ));
        assert!(matches!(log.advance_round(2, "clear"), Ok(Advance::Continue { .. })));
        assert!(matches!(
            log.advance_round(2, "again"),
            Err(ForgeError::RoundNotReady(RoundStatus::Closed))
        ));
        for round in 2..=3 {
            log.open_round(five(PromptTask::NerGen, round)).unwrap();
            fill(&mut log);
            let adv = log.advance_round(3, "ok").unwrap();
            assert_eq!(matches!(adv, Advance::Finished(_)), round == 3);
        }
        assert!(log.is_finished());
        assert_eq!(log.final_prompt.as_ref().unwrap().id, "r3-c3");
        assert!(matches!(
            log.open_round(five(PromptTask::NerGen, 4)),
            Err(ForgeError::AlreadyFinished)
        ));
        let replay = RefinementLog::from_events(log.events().to_vec()).unwrap();
        assert_eq!(replay, log);
    }

    #[test]
    fn rejects_foreign_task_candidates() {
        let mut log = RefinementLog::new(PromptTask::NerGen, "x", 3, 10);
        assert!(matches!(
            log.open_round(five(PromptTask::ReGen, 1)),
            Err(ForgeError::TaskMismatch { .. })
        ));
    }

    struct Echo;

    impl CandidateSampler for Echo {
        fn samples(&self, t: &PromptTemplate, count: usize, _: &Gateway) -> Result<Vec<String>, ForgeError> {
            Ok((0..count).map(|i| format!("{} #{i}", t.id)).collect())
        }
    }

    #[test]
    fn mock_driven_session_persists_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let store = ForgeStore::new(dir.path().join("forge.jsonl"));
        let gateway = Gateway::mock(MockProvider::new(7));
        for task in [
            PromptTask::NerGen,
            PromptTask::ReGen,
            PromptTask::NerZeroshot,
            PromptTask::ReZeroshot,
        ] {
            let store = ForgeStore::new(dir.path().join(format!("{task}.jsonl")));
            let mut forge = Forge::open(store, task, task.default_description(), 3, 2).unwrap();
            assert_eq!(
                forge.step(&gateway, &Echo).unwrap(),
                RoundStatus::AwaitingSelection,
                "{task}"
            );
        }
        let mut forge = Forge::open(store.clone(), PromptTask::NerGen, "ner data", 3, 10).unwrap();
        assert_eq!(forge.step(&gateway, &Echo).unwrap(), RoundStatus::AwaitingSelection);
        assert_eq!(forge.select(1, "best wording", &gateway, &Echo).unwrap(), None);
        let round2 = forge.log().current().unwrap();
        assert_eq!(round2.round, 2);
        assert_eq!(round2.candidates.len(), 5);
        assert_eq!(round2.status(), RoundStatus::AwaitingSelection);
        assert_eq!(round2.samples[&1].len(), 10);

        let mut resumed = Forge::open(store, PromptTask::NerGen, "ignored", 3, 10).unwrap();
        assert_eq!(resumed.log(), forge.log());
        assert!(matches!(
            resumed.select(9, "", &gateway, &Echo),
            Err(ForgeError::InvalidSelection(9))
        ));
        assert_eq!(resumed.select(4, "", &gateway, &Echo).unwrap(), None);
        let done = resumed.select(2, "final", &gateway, &Echo).unwrap().unwrap();
        assert_eq!(done.id, "r3-c2");
        assert_eq!(done.round, 3);
    }
}
