use std::time::{Duration, Instant};

use rand::RngExt;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatRequest, GatewayError, ProviderKind, RateLimiter, Transcript, TranscriptEntry};

/// Statuses worth another attempt.
pub const RETRYABLE_STATUSES: [u16; 6] = [408, 429, 500, 502, 503, 504];

/// Connection settings for the HTTP provider. Holds the *name* of the
/// environment variable with the API key, never the key itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub api_key_env: String,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub rate_limit_per_min: u32,
    pub timeout_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_retries: 5,
            backoff_base_ms: 500,
            rate_limit_per_min: 60,
            timeout_ms: 120_000,
        }
    }
}

impl ProviderConfig {
    /// `base * 2^attempt` plus up to `base` of jitter.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let base = self.backoff_base_ms.max(1);
        let exp = base.saturating_mul(1u64 << attempt.min(16));
        let jitter = rand::rng().random_range(0..base);
        Duration::from_millis(exp + jitter)
    }
}

enum Failure {
    Retryable {
        status: Option<u16>,
        message: String,
        body: Option<String>,
    },
    Fatal(GatewayError),
}

pub struct HttpBackend {
    config: ProviderConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpBackend {
    pub fn new(config: ProviderConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        let limiter = RateLimiter::per_minute(config.rate_limit_per_min);
        HttpBackend { config, agent, limiter }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(&self, request: &ChatRequest, api_key: &str) -> Result<(String, u16), Failure> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let result = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        let mut response = match result {
            Ok(r) => r,
            Err(e) => {
                return Err(match e {
                    ureq::Error::BadUri(_) | ureq::Error::RequireHttpsOnly(_) => {
                        Failure::Fatal(GatewayError::TransportError(e.to_string()))
                    }
                    other => Failure::Retryable {
                        status: None,
                        message: other.to_string(),
                        body: None,
                    },
                })
            }
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| Failure::Retryable {
            status: Some(status),
            message: format!("reading body: {e}"),
            body: None,
        })?;
        if RETRYABLE_STATUSES.contains(&status) {
            return Err(Failure::Retryable {
                status: Some(status),
                message: format!("status {status}"),
                body: Some(text),
            });
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(GatewayError::ProviderError { status, body: text }));
        }
        extract_content(&text)
            .map(|c| (c, status))
            .ok_or(Failure::Fatal(GatewayError::ProviderError { status, body: text }))
    }

    /// Runs attempts until success, a non-retryable failure, or
    /// `max_retries` retries. Every attempt is written to the transcript.
    pub(crate) fn complete_with_retry(
        &self,
        request: &ChatRequest,
        digest: &str,
        transcript: Option<&Transcript>,
    ) -> Result<String, GatewayError> {
        let api_key = std::env::var(&self.config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::MissingApiKey(self.config.api_key_env.clone()))?;
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            let start = Instant::now();
            let outcome = self.attempt(request, &api_key);
            let elapsed = start.elapsed().as_millis() as u64;
            let entry = TranscriptEntry::attempt(digest, request, attempt, ProviderKind::Real);
            match outcome {
                Ok((content, status)) => {
                    if let Some(t) = transcript {
                        t.record(&entry.succeeded(&content, Some(status), elapsed))?;
                    }
                    return Ok(content);
                }
                Err(Failure::Fatal(err)) => {
                    if let Some(t) = transcript {
                        let (status, body) = match &err {
                            GatewayError::ProviderError { status, body } => (Some(*status), Some(body.as_str())),
                            _ => (None, None),
                        };
                        t.record(&entry.failed(&err.to_string(), status, body, elapsed))?;
                    }
                    return Err(err);
                }
                Err(Failure::Retryable { status, message, body }) => {
                    if let Some(t) = transcript {
                        t.record(&entry.failed(&message, status, body.as_deref(), elapsed))?;
                    }
                    if attempt >= self.config.max_retries {
                        return Err(match status {
                            Some(429) => GatewayError::RateLimited { attempts: attempt + 1 },
                            Some(s) => GatewayError::ProviderError {
                                status: s,
                                body: body.unwrap_or(message),
                            },
                            None => GatewayError::TransportError(message),
                        });
                    }
                    std::thread::sleep(self.config.backoff(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// `choices[0].message.content` of a chat-completions response body.
pub(crate) fn extract_content(body: &str) -> Option<String> {
    let parsed: WireResponse = serde_json::from_str(body).ok()?;
    parsed.choices.into_iter().next()?.message.content
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_first_choice() {
        let body = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Yes."}}]}"#;
        assert_eq!(extract_content(body).as_deref(), Some("Yes."));
        assert_eq!(extract_content(r#"{"choices":[]}"#), None);
        assert_eq!(extract_content("nope"), None);
    }

    #[test]
    fn backoff_grows() {
        let cfg = ProviderConfig {
            backoff_base_ms: 10,
            ..ProviderConfig::default()
        };
        for attempt in 0..4 {
            let d = cfg.backoff(attempt).as_millis() as u64;
            let floor = 10 << attempt;
            assert!(d >= floor && d < floor + 10, "attempt {attempt}: {d}");
        }
    }
}
