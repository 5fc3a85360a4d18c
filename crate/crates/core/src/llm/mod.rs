//! Language-model backends: the chat-completion wire client, record/replay,
//! a deterministic rule-based stand-in, prompt templates and reply parsers.
//!
//! Every agent utterance in the crate goes through [`ChatBackend::complete`];
//! nothing outside this module touches the network.

pub mod parse;
pub mod prompts;
mod remote;
mod rule;
mod scripted;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::RemoteBackend;
pub use rule::{RuleBackend, RuleWorld};
pub use scripted::{request_digest, RecordingBackend, ScriptedBackend, TranscriptEntry};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (retry after {retry_after_s:?} s)")]
    RateLimited { retry_after_s: Option<f64> },
    #[error("bad reply: {0}")]
    BadReply(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("scripted transcript exhausted after {0} replies")]
    Exhausted(usize),
    #[error("scripted transcript entry {index}: request digest mismatch")]
    DigestMismatch { index: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Remote,
    #[serde(alias = "rule")]
    RuleBased,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff_base_ms: u64,
    pub max_inflight: usize,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    /// Transcript to replay (scripted kind).
    pub transcript: Option<PathBuf>,
    /// Log request and response bodies (key redacted).
    pub verbose: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::RuleBased,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo-1106".into(),
            temperature: 0.0,
            max_tokens: None,
            timeout_s: 60.0,
            max_retries: 3,
            backoff_base_ms: 500,
            max_inflight: 8,
            api_key_env: "OPENAI_API_KEY".into(),
            transcript: None,
            verbose: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if !(self.timeout_s > 0.0) {
            return Err(LlmError::Config(format!("timeout_s must be > 0, got {}", self.timeout_s)));
        }
        if self.max_inflight == 0 {
            return Err(LlmError::Config("max_inflight must be >= 1".into()));
        }
        match self.kind {
            BackendKind::Remote => {
                if std::env::var(&self.api_key_env).map_or(true, |v| v.is_empty()) {
                    return Err(LlmError::Config(format!(
                        "remote backend needs an API key in ${}",
                        self.api_key_env
                    )));
                }
            }
            BackendKind::Scripted => {
                if self.transcript.is_none() {
                    return Err(LlmError::Config("scripted backend needs a transcript file".into()));
                }
            }
            BackendKind::RuleBased => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub requests: usize,
    pub retries: usize,
    pub failures: usize,
}

#[derive(Debug, Default)]
pub struct Telemetry {
    requests: AtomicUsize,
    retries: AtomicUsize,
    failures: AtomicUsize,
}

impl Telemetry {
    pub(crate) fn request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn retry(&self) {
        self.retries.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn failure(&self) {
        self.failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TelemetrySnapshot {
        TelemetrySnapshot {
            requests: self.requests.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            failures: self.failures.load(Ordering::Relaxed),
        }
    }
}

/// Transport for all agent speech.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;

    /// How many calls callers may keep in flight. Replay-sensitive backends
    /// report 1 so call order is deterministic.
    fn concurrency(&self) -> usize {
        1
    }

    fn telemetry(&self) -> TelemetrySnapshot {
        TelemetrySnapshot::default()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }

    fn concurrency(&self) -> usize {
        (**self).concurrency()
    }

    fn telemetry(&self) -> TelemetrySnapshot {
        (**self).telemetry()
    }
}

/// Builds a backend from config. The rule-based kind answers planner roles
/// only when `world` is given.
pub fn build_backend(
    config: &BackendConfig,
    rules: crate::population::NeedsRuleTable,
    world: Option<Arc<RuleWorld>>,
) -> Result<Arc<dyn ChatBackend>, LlmError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::RuleBased => {
            let b = RuleBackend::new(rules);
            Arc::new(match world {
                Some(w) => b.with_world(w),
                None => b,
            })
        }
        BackendKind::Remote => Arc::new(RemoteBackend::new(config.clone())?),
        BackendKind::Scripted => {
            let path = config.transcript.as_ref().expect("validated");
            Arc::new(ScriptedBackend::load(path)?)
        }
    })
}

/// Maps `f` over `items` with at most `limit` calls running at once.
/// Results come back in input order.
pub fn map_bounded<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if limit <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..limit.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
