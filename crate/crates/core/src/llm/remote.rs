//! Chat-completions client over HTTP(S) with bounded in-flight requests and
//! exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{BackendConfig, ChatBackend, ChatMessage, LlmError, Telemetry, TelemetrySnapshot};

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Debug, Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Counting gate for concurrent requests.
struct Gate {
    in_use: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_use.lock().expect("gate");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate");
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().expect("gate") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    config: BackendConfig,
    api_key: String,
    agent: Agent,
    gate: Gate,
    telemetry: Telemetry,
}

enum Attempt {
    Done(String),
    Retry { wait: Duration, err: LlmError },
    Fatal(LlmError),
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).unwrap_or_default();
        let agent = Agent::new_with_config(
            Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
                .http_status_as_error(false)
                .build(),
        );
        let gate = Gate {
            in_use: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_inflight,
        };
        Ok(Self {
            config,
            api_key,
            agent,
            gate,
            telemetry: Telemetry::default(),
        })
    }

    /// The exact JSON body sent for `messages`.
    pub fn request_body(&self, messages: &[ChatMessage]) -> String {
        serde_json::to_string(&ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        })
        .expect("request serializes")
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16)))
    }

    fn attempt(&self, body: &str, attempt: u32) -> Attempt {
        let result = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match result {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    wait: self.backoff(attempt),
                    err: LlmError::Transport(e.to_string()),
                }
            }
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok());
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry {
                    wait: self.backoff(attempt),
                    err: LlmError::Transport(e.to_string()),
                }
            }
        };
        if self.config.verbose {
            debug!("chat reply ({status}): {text}");
        }
        match status {
            200..=299 => match serde_json::from_str::<ChatResponse>(&text) {
                Ok(r) => match r.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(c) if !c.trim().is_empty() => Attempt::Done(c),
                    _ => Attempt::Fatal(LlmError::BadReply("empty completion content".into())),
                },
                Err(e) => Attempt::Fatal(LlmError::BadReply(format!("unparseable response body: {e}"))),
            },
            429 => Attempt::Retry {
                wait: retry_after
                    .map(Duration::from_secs_f64)
                    .unwrap_or_else(|| self.backoff(attempt)),
                err: LlmError::RateLimited {
                    retry_after_s: retry_after,
                },
            },
            500..=599 => Attempt::Retry {
                wait: self.backoff(attempt),
                err: LlmError::Transport(format!("HTTP {status}: {text}")),
            },
            _ => Attempt::Fatal(LlmError::Transport(format!("HTTP {status}: {text}"))),
        }
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = self.request_body(messages);
        if self.config.verbose {
            debug!(
                "POST {} (Authorization: Bearer <redacted>) {body}",
                self.config.endpoint
            );
        }
        let _slot = self.gate.acquire();
        self.telemetry.request();
        let mut attempt = 0;
        loop {
            match self.attempt(&body, attempt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => {
                    self.telemetry.failure();
                    return Err(e);
                }
                Attempt::Retry { wait, err } => {
                    if attempt >= self.config.max_retries {
                        self.telemetry.failure();
                        return Err(err);
                    }
                    warn!("chat request failed ({err}); retrying in {wait:?}");
                    self.telemetry.retry();
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }

    fn concurrency(&self) -> usize {
        self.config.max_inflight
    }

    fn telemetry(&self) -> TelemetrySnapshot {
        self.telemetry.snapshot()
    }
}
