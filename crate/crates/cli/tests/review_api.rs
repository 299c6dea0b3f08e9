mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::process::{Child, Command, Stdio};

use common::{ner_workspace, stderr, Workspace};
use serde_json::{json, Value};

const CONF: &str = "[generation]\nn_per_entity: 5\nentities: 3\n\n[forge]\nbudget: 2\nsamples_per_candidate: 10\n";

/// The server process; killed on drop.
struct Server {
    child: Child,
    base: String,
    agent: ureq::Agent,
}

impl Drop for Server {
    /// Interrupts the server so it releases its session locks, as Ctrl-C would.
    fn drop(&mut self) {
        let interrupted = Command::new("kill")
            .args(["-INT", &self.child.id().to_string()])
            .status()
            .is_ok_and(|s| s.success());
        if interrupted {
            for _ in 0..100 {
                if let Ok(Some(_)) = self.child.try_wait() {
                    return;
                }
                std::thread::sleep(std::time::Duration::from_millis(50));
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Server {
    fn start(ws: &Workspace, extra: &[&str]) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_clinsynth"))
            .args(["review", "serve", "--config", "run.conf", "--port", "0"])
            .args(extra)
            .current_dir(ws.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let Some(base) = line.trim().strip_prefix("listening on ").map(String::from) else {
            let mut err = String::new();
            let _ = std::io::Read::read_to_string(&mut child.stderr.take().unwrap(), &mut err);
            panic!("unexpected banner {line:?}: {err}");
        };
        assert!(base.starts_with("http://127.0.0.1:"), "{base}");
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Server { child, base, agent }
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut r = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_to_string().unwrap())
    }

    fn get_json(&self, path: &str) -> (u16, Value) {
        let (s, body) = self.get(path);
        (s, serde_json::from_str(&body).unwrap_or_else(|e| panic!("{body}: {e}")))
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut r = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("Content-Type", "application/json")
            .send(body.to_string())
            .unwrap();
        let text = r.body_mut().read_to_string().unwrap();
        (
            r.status().as_u16(),
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{text}: {e}")),
        )
    }
}

fn review_dir(ws: &Workspace) -> std::path::PathBuf {
    fs::read_dir(ws.runs())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("review-"))
        .unwrap()
}

#[test]
fn empty_server_reports_not_found() {
    let ws = ner_workspace(CONF);
    let srv = Server::start(&ws, &[]);
    let (s, body) = srv.get_json("/rounds/current");
    assert_eq!(s, 404);
    assert_eq!(body["error"], "NotFound");
    assert!(body["message"].is_string());
    let (s, body) = srv.get_json("/samples?status=pending");
    assert_eq!(s, 200);
    assert_eq!(body["total"], 0);
    assert_eq!(srv.get("/scatter").0, 404);
    assert_eq!(srv.get_json("/samples?status=maybe").0, 400);
}

#[test]
fn round_selection_closes_the_round_in_the_log() {
    let ws = ner_workspace(CONF);
    let o = ws.clinsynth(&["forge", "--config", "run.conf"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let srv = Server::start(&ws, &[]);

    let (s, round) = srv.get_json("/rounds/current");
    assert_eq!(s, 200);
    assert_eq!(round["round"], 1);
    assert_eq!(round["status"], "awaiting-selection");
    let candidates = round["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 5);
    assert!(candidates.iter().all(|c| c["samples"].as_array().unwrap().len() == 10));

    let (s, err) = srv.post(
        "/rounds/current/selection",
        json!({"candidate_id": 6, "rationale": "x"}),
    );
    assert_eq!((s, err["error"].as_str().unwrap()), (400, "InvalidSelection"));
    let (s, _) = srv.post("/rounds/current/selection", json!({"candidate_id": "r9-c1"}));
    assert_eq!(s, 400);

    let id = candidates[1]["id"].as_str().unwrap().to_string();
    let (s, next) = srv.post(
        "/rounds/current/selection",
        json!({"candidate_id": id, "rationale": "reads naturally"}),
    );
    assert_eq!(s, 200, "{next}");
    assert_eq!(next["round"], 2);
    assert_eq!(next["status"], "awaiting-selection");

    let (s, done) = srv.post(
        "/rounds/current/selection",
        json!({"candidate_id": 1, "rationale": "final"}),
    );
    assert_eq!(s, 200, "{done}");
    assert_eq!(done["status"], "closed");
    assert!(done["final_prompt"]["body"].is_string());
    let (s, err) = srv.post("/rounds/current/selection", json!({"candidate_id": 1}));
    assert_eq!((s, err["error"].as_str().unwrap()), (409, "RoundNotReady"));
    drop(srv);

    // the CLI sees the closed rounds the server recorded
    let o = ws.clinsynth(&["forge", "--config", "run.conf"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("status: finished"), "{out}{}", stderr(&o));
}

#[test]
fn sample_decisions_persist_across_restarts() {
    let ws = ner_workspace(CONF);
    assert!(ws.clinsynth(&["gen", "--config", "run.conf"]).status.success());
    assert!(ws.clinsynth(&["shift", "--config", "run.conf"]).status.success());

    let srv = Server::start(&ws, &[]);
    let (_, all) = srv.get_json("/samples?status=all");
    let total = all["total"].as_u64().unwrap();
    assert!(total >= 3, "{all}");
    assert!(all["samples"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["status"] == "pending"));

    let (s, body) = srv.post("/samples/0/decision", json!({"decision": "accept"}));
    assert_eq!((s, body["status"].as_str().unwrap()), (200, "accepted"));
    let (s, body) = srv.post(
        "/samples/1/decision",
        json!({"decision": "reject", "reason": "implausible"}),
    );
    assert_eq!((s, body["status"].as_str().unwrap()), (200, "rejected"));
    let (s, body) = srv.post("/samples/1/decision", json!({"decision": "accept"}));
    assert_eq!((s, body["error"].as_str().unwrap()), (409, "AlreadyDecided"));
    assert_eq!(srv.post("/samples/9999/decision", json!({"decision": "accept"})).0, 404);
    let (s, body) = srv.post("/samples/2/decision", json!({"decision": "maybe"}));
    assert_eq!((s, body["error"].as_str().unwrap()), (422, "InvalidBody"));
    let (s, body) = srv.post("/samples/two/decision", json!({"decision": "accept"}));
    assert_eq!((s, body["error"].as_str().unwrap()), (400, "InvalidPath"));

    let (s, scatter) = srv.get("/scatter");
    assert_eq!(s, 200);
    assert!(scatter.starts_with("x\ty\tsource\tid\n"));
    drop(srv);

    let dir = review_dir(&ws);
    assert!(!dir.join("run.lock").exists());
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["status"], "stopped");
    let quarantine = fs::read_to_string(dir.join("quarantine.jsonl")).unwrap();
    assert_eq!(quarantine.lines().count(), 1);
    assert!(quarantine.contains("implausible"));

    let srv = Server::start(&ws, &[]);
    let (_, pending) = srv.get_json("/samples?status=pending");
    assert_eq!(pending["samples"].as_array().unwrap().len() as u64, total - 2);
    let (_, rejected) = srv.get_json("/samples?status=rejected");
    let rejected = rejected["samples"].as_array().unwrap();
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0]["id"], 1);
    assert_eq!(rejected[0]["reason"], "implausible");
    assert_eq!(srv.post("/samples/0/decision", json!({"decision": "reject"})).0, 409);
}
