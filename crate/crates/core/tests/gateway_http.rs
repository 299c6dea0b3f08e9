use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use clinsynth::llm_gateway::{ChatRequest, Gateway, GatewayError, ProviderConfig, ProviderKind, TranscriptEntry};

/// Serves the scripted `(status, body)` replies in order, repeating the last
/// one, and counts requests.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; length];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = &script[n.min(script.len() - 1)];
            let response = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (url, hits)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

fn config(url: &str, env: &str) -> ProviderConfig {
    std::env::set_var(env, "test-key");
    ProviderConfig {
        endpoint_url: url.to_string(),
        api_key_env: env.to_string(),
        max_retries: 5,
        backoff_base_ms: 1,
        rate_limit_per_min: 100_000,
        timeout_ms: 5_000,
    }
}

fn attempts(path: &std::path::Path) -> Vec<TranscriptEntry> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn retries_transient_statuses_then_succeeds() {
    let (url, hits) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, ok_body("Yes.")),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let gw = Gateway::http(config(&url, "CS_KEY_RETRY"))
        .with_transcript(dir.path().join("t.jsonl"))
        .unwrap();
    let resp = gw.complete(&ChatRequest::user("hello", 0.0)).unwrap();
    assert_eq!(resp.content, "Yes.");
    assert_eq!(resp.provider, ProviderKind::Real);
    assert!(!resp.cached);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    let log = attempts(&dir.path().join("t.jsonl"));
    assert_eq!(log.iter().filter(|e| e.event == "attempt").count(), 3);
    assert_eq!(
        log.iter().map(|e| e.status).collect::<Vec<_>>(),
        [Some(503), Some(429), Some(200)]
    );
    assert_eq!(log.iter().map(|e| e.attempt).collect::<Vec<_>>(), [0, 1, 2]);
}

#[test]
fn persistent_429_becomes_rate_limited_after_six_attempts() {
    let (url, hits) = serve(vec![(429, "slow down".into())]);
    let gw = Gateway::http(config(&url, "CS_KEY_429"));
    let err = gw.complete(&ChatRequest::user("hello", 0.0)).unwrap_err();
    assert_eq!(err, GatewayError::RateLimited { attempts: 6 });
    assert_eq!(hits.load(Ordering::SeqCst), 6);
}

#[test]
fn persistent_5xx_surfaces_provider_error() {
    let (url, _) = serve(vec![(502, "bad gateway".into())]);
    let gw = Gateway::http(config(&url, "CS_KEY_502"));
    let err = gw.complete(&ChatRequest::user("hello", 0.0)).unwrap_err();
    assert_eq!(
        err,
        GatewayError::ProviderError {
            status: 502,
            body: "bad gateway".into()
        }
    );
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits) = serve(vec![(400, "{\"error\":\"bad\"}".into())]);
    let gw = Gateway::http(config(&url, "CS_KEY_400"));
    let err = gw.complete(&ChatRequest::user("hello", 0.0)).unwrap_err();
    assert!(matches!(err, GatewayError::ProviderError { status: 400, .. }));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_key_fails_before_any_request() {
    let (url, hits) = serve(vec![(200, ok_body("x"))]);
    let mut cfg = config(&url, "CS_KEY_UNUSED");
    cfg.api_key_env = "CS_KEY_DEFINITELY_UNSET".into();
    let err = Gateway::http(cfg)
        .complete(&ChatRequest::user("hello", 0.0))
        .unwrap_err();
    assert_eq!(err, GatewayError::MissingApiKey("CS_KEY_DEFINITELY_UNSET".into()));
    assert_eq!(hits.load(Ordering::SeqCst), 0);
}

#[test]
fn cache_hit_skips_network() {
    let (url, hits) = serve(vec![(200, ok_body("No."))]);
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let request = ChatRequest::user("cached?", 0.0);
    {
        let gw = Gateway::http(config(&url, "CS_KEY_CACHE"))
            .with_cache(dir.path().join("cache"))
            .unwrap()
            .with_transcript(&transcript)
            .unwrap();
        assert!(!gw.complete(&request).unwrap().cached);
    }
    let gw = Gateway::http(config(&url, "CS_KEY_CACHE"))
        .with_cache(dir.path().join("cache"))
        .unwrap()
        .with_transcript(&transcript)
        .unwrap();
    let again = gw.complete(&request).unwrap();
    assert!(again.cached);
    assert_eq!(again.content, "No.");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let events: Vec<String> = attempts(&transcript).into_iter().map(|e| e.event).collect();
    assert_eq!(events, ["attempt", "cache_hit"]);
}

#[test]
fn malformed_success_body_is_provider_error() {
    let (url, _) = serve(vec![(200, "{\"unexpected\":true}".into())]);
    let err = Gateway::http(config(&url, "CS_KEY_SHAPE"))
        .complete(&ChatRequest::user("hello", 0.0))
        .unwrap_err();
    assert!(matches!(err, GatewayError::ProviderError { status: 200, .. }));
}
