//! Loopback HTTP API for the review front end.
//!
//! Prompt rounds come from the forge session of the same config; sample
//! decisions are appended to `decisions.jsonl` in the `review-<hash>`
//! session and rejected samples also to its `quarantine.jsonl`. Both files
//! are replayed at startup, so a restarted server keeps earlier decisions.
//! Errors are `{"error": <class>, "message": ...}` with a matching status.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clinsynth::llm_gateway::Gateway;
use clinsynth::prompt_forge::{CandidateSampler, Forge, RoundStatus};
use clinsynth::ErrorClass;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::{forge_sampler, open_forge, sync_forge_outputs, ReviewSample, KEPT_SAMPLES};
use crate::config::RunConfig;
use crate::rundir::{latest_run_with, RunDir};
use crate::CliError;

pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const QUARANTINE_FILE: &str = "quarantine.jsonl";

pub struct ForgeSession {
    pub forge: Forge,
    pub session: RunDir,
    pub gateway: Gateway,
    pub sampler: Box<dyn CandidateSampler + Send + Sync>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

/// One line of `decisions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    /// Name of the gen run directory the sample belongs to.
    pub run: String,
    pub id: usize,
    pub decision: Decision,
    #[serde(default)]
    pub reason: String,
    pub decided_unix: u64,
}

pub struct ReviewState {
    pub forge: ForgeSession,
    pub gen_run: Option<String>,
    pub samples: Vec<ReviewSample>,
    pub decisions: BTreeMap<usize, DecisionRecord>,
    pub review: RunDir,
    pub scatter: Option<PathBuf>,
}

pub type Shared = Arc<Mutex<ReviewState>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    class: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, class: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            class: class.to_string(),
            message: message.into(),
        }
    }

    fn internal(e: CliError) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            class: e.class,
            message: e.message,
        }
    }
}

// malformed requests get the same JSON error shape as every other failure

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "InvalidBody", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(r.status(), "InvalidQuery", r.body_text())
    }
}

impl From<PathRejection> for ApiError {
    fn from(r: PathRejection) -> Self {
        ApiError::new(r.status(), "InvalidPath", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.class, "message": self.message}))).into_response()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::new("ParseError", format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let line = serde_json::to_string(value).expect("record serializes") + "\n";
    f.write_all(line.as_bytes()).map_err(|e| CliError::io(path, e))
}

impl ReviewState {
    /// Opens the forge and review sessions and loads the samples of
    /// `gen_run` (default: the newest gen run with kept samples).
    pub fn open(cfg: &RunConfig, gen_run: Option<&Path>, scatter: Option<&Path>) -> Result<Self, CliError> {
        let mut session = RunDir::session(&cfg.output_dir, "forge", &cfg.hash(), &cfg.doc.canonical())?;
        session.add_input(&cfg.path)?;
        let forge = open_forge(cfg, &session)?;
        let sampler = forge_sampler(cfg, forge.log().task)?;
        let gateway = cfg.gateway(session.path())?;

        let gen_dir = gen_run
            .map(Path::to_path_buf)
            .or_else(|| latest_run_with(&cfg.output_dir, "gen", KEPT_SAMPLES));
        let (gen_run, samples) = match &gen_dir {
            Some(dir) => {
                let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                let path = dir.join(KEPT_SAMPLES);
                if !path.is_file() {
                    return Err(CliError::new("NotFound", format!("{} does not exist", path.display())));
                }
                (Some(name), read_jsonl::<ReviewSample>(&path)?)
            }
            None => (None, Vec::new()),
        };

        let review = RunDir::session(&cfg.output_dir, "review", &cfg.hash(), &cfg.doc.canonical())?;
        let decisions = read_jsonl::<DecisionRecord>(&review.join(DECISIONS_FILE))?
            .into_iter()
            .filter(|d| Some(&d.run) == gen_run.as_ref())
            .map(|d| (d.id, d))
            .collect();
        let scatter = scatter
            .map(Path::to_path_buf)
            .or_else(|| latest_run_with(&cfg.output_dir, "shift", "scatter.tsv").map(|d| d.join("scatter.tsv")));
        review.save_manifest("serving")?;
        Ok(ReviewState {
            forge: ForgeSession {
                forge,
                session,
                gateway,
                sampler,
            },
            gen_run,
            samples,
            decisions,
            review,
            scatter,
        })
    }

    fn round_json(&self) -> Result<Value, ApiError> {
        let log = self.forge.forge.log();
        let round = log
            .current()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no refinement round yet; run forge"))?;
        let candidates: Vec<Value> = round
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                json!({
                    "number": i + 1,
                    "id": c.id,
                    "body": c.body,
                    "samples": round.samples.get(&(i + 1)).cloned().unwrap_or_default(),
                })
            })
            .collect();
        Ok(json!({
            "task": log.task,
            "round": round.round,
            "budget": log.budget,
            "status": round.status().to_string(),
            "candidates": candidates,
            "selected": round.selected,
            "rationale": round.rationale,
            "final_prompt": log.final_prompt,
        }))
    }

    fn status_of(&self, id: usize) -> &'static str {
        match self.decisions.get(&id).map(|d| d.decision) {
            None => "pending",
            Some(Decision::Accept) => "accepted",
            Some(Decision::Reject) => "rejected",
        }
    }

    fn sample_json(&self, s: &ReviewSample) -> Value {
        let mut v = serde_json::to_value(s).expect("sample serializes");
        v["status"] = json!(self.status_of(s.id));
        v["reason"] = json!(self.decisions.get(&s.id).map(|d| d.reason.clone()));
        v
    }
}

async fn blocking<T: Send + 'static>(
    state: Shared,
    f: impl FnOnce(&mut ReviewState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut guard = state.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
}

async fn current_round(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    blocking(state, |s| s.round_json().map(Json)).await
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CandidateRef {
    Number(usize),
    Id(String),
}

#[derive(Debug, Deserialize)]
pub struct SelectionBody {
    pub candidate_id: CandidateRef,
    #[serde(default)]
    pub rationale: String,
}

async fn select_candidate(
    State(state): State<Shared>,
    body: Result<Json<SelectionBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(body) = body?;
    blocking(state, move |s| {
        s.round_json()?;
        let fs = &mut s.forge;
        let round = fs.forge.log().current().expect("checked by round_json");
        let status = round.status();
        if fs.forge.log().is_finished() || status != RoundStatus::AwaitingSelection {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "RoundNotReady",
                format!("round {} is {status}", round.round),
            ));
        }
        let number = match &body.candidate_id {
            CandidateRef::Number(n) => Some(*n).filter(|n| (1..=round.candidates.len()).contains(n)),
            CandidateRef::Id(id) => round.candidates.iter().position(|c| &c.id == id).map(|i| i + 1),
        };
        let number = number.ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "InvalidSelection",
                format!("{:?} is not a candidate of round {}", body.candidate_id, round.round),
            )
        })?;
        let result = fs
            .forge
            .select(number, &body.rationale, &fs.gateway, fs.sampler.as_ref());
        sync_forge_outputs(&fs.forge, &mut fs.session).map_err(ApiError::internal)?;
        result.map_err(|e| {
            let status = match e.class() {
                "InvalidSelection" => StatusCode::BAD_REQUEST,
                "RoundNotReady" | "AlreadyFinished" => StatusCode::CONFLICT,
                _ => StatusCode::BAD_GATEWAY,
            };
            ApiError::new(status, e.class(), e.to_string())
        })?;
        s.round_json().map(Json)
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct SampleQuery {
    pub status: Option<String>,
}

async fn list_samples(
    State(state): State<Shared>,
    q: Result<Query<SampleQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = q?;
    let filter = q.status.unwrap_or_else(|| "all".into());
    if !["pending", "accepted", "rejected", "all"].contains(&filter.as_str()) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidQuery",
            format!("status must be pending, accepted, rejected or all, got {filter:?}"),
        ));
    }
    blocking(state, move |s| {
        let items: Vec<Value> = s
            .samples
            .iter()
            .filter(|x| filter == "all" || s.status_of(x.id) == filter)
            .map(|x| s.sample_json(x))
            .collect();
        Ok(Json(
            json!({"gen_run": s.gen_run, "total": s.samples.len(), "samples": items}),
        ))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct DecisionBody {
    pub decision: Decision,
    #[serde(default)]
    pub reason: String,
}

async fn decide(
    State(state): State<Shared>,
    id: Result<UrlPath<usize>, PathRejection>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let UrlPath(id) = id?;
    let Json(body) = body?;
    blocking(state, move |s| {
        let sample = s
            .samples
            .iter()
            .find(|x| x.id == id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("no sample {id}")))?;
        if let Some(d) = s.decisions.get(&id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "AlreadyDecided",
                format!(
                    "sample {id} was already {}",
                    if d.decision == Decision::Accept {
                        "accepted"
                    } else {
                        "rejected"
                    }
                ),
            ));
        }
        let record = DecisionRecord {
            run: s.gen_run.clone().unwrap_or_default(),
            id,
            decision: body.decision,
            reason: body.reason,
            decided_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        // the quarantine line goes first: a crash in between leaves the
        // sample pending rather than rejected without a quarantine entry
        if record.decision == Decision::Reject {
            let q = json!({
                "run": record.run,
                "id": id,
                "prompt_id": sample.prompt_id,
                "seed_ref": sample.seed_ref,
                "text": sample.text,
                "rule": "human-review",
                "reason": record.reason,
            });
            append_line(&s.review.join(QUARANTINE_FILE), &q).map_err(ApiError::internal)?;
        }
        append_line(&s.review.join(DECISIONS_FILE), &record).map_err(ApiError::internal)?;
        s.decisions.insert(id, record);
        Ok(Json(s.sample_json(&sample)))
    })
    .await
}

async fn scatter(State(state): State<Shared>) -> Result<Response, ApiError> {
    blocking(state, |s| {
        let path = s
            .scatter
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no scatter data; run shift"))?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "NotFound", format!("{}: {e}", path.display())))?;
        Ok((
            [(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")],
            text,
        )
            .into_response())
    })
    .await
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/rounds/current", get(current_round))
        .route("/rounds/current/selection", post(select_candidate))
        .route("/samples", get(list_samples))
        .route("/samples/{id}/decision", post(decide))
        .route("/scatter", get(scatter))
        .with_state(state)
}

/// Serves on `127.0.0.1:port` (0 picks a free port) until interrupted.
pub fn serve_blocking(
    config: &Path,
    gen_run: Option<&Path>,
    scatter: Option<&Path>,
    port: u16,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let state = Arc::new(Mutex::new(ReviewState::open(&cfg, gen_run, scatter)?));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::new("IoError", e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port)))
            .await
            .map_err(|e| CliError::new("IoError", format!("bind 127.0.0.1:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::new("IoError", e.to_string()))?;
        writeln!(out, "listening on http://{addr}")
            .and_then(|_| out.flush())
            .map_err(|e| CliError::new("IoError", e.to_string()))?;
        axum::serve(listener, router(state.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::new("IoError", e.to_string()))
    })?;
    let state = state.lock().unwrap_or_else(|p| p.into_inner());
    state.review.save_manifest("stopped")
}
