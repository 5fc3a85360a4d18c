//! Record/replay of backend conversations.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatMessage, LlmError, TelemetrySnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub reply_text: String,
}

/// Hex SHA-256 of the JSON-encoded message list.
pub fn request_digest(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Replays recorded replies in order and errors once they run out.
pub struct ScriptedBackend {
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
    verify_digests: bool,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self {
            entries,
            cursor: Mutex::new(0),
            verify_digests: false,
        }
    }

    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            replies
                .into_iter()
                .map(|r| TranscriptEntry {
                    request_digest: String::new(),
                    reply_text: r.into(),
                })
                .collect(),
        )
    }

    /// Also require each request to match its recorded digest.
    pub fn strict(mut self) -> Self {
        self.verify_digests = true;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let entries: Vec<TranscriptEntry> =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - *self.cursor.lock().expect("cursor")
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().expect("cursor");
        let entry = self.entries.get(*cursor).ok_or(LlmError::Exhausted(self.entries.len()))?;
        if self.verify_digests && entry.request_digest != request_digest(messages) {
            return Err(LlmError::DigestMismatch { index: *cursor });
        }
        *cursor += 1;
        Ok(entry.reply_text.clone())
    }
}

/// Wraps a backend and records every exchange for later replay.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<TranscriptEntry>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.log.lock().expect("log").clone()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.entries()).expect("entries serialize");
        fs::write(path, text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        // Holding the lock across the call keeps log order equal to call order.
        let mut log = self.log.lock().expect("log");
        let reply = self.inner.complete(messages)?;
        log.push(TranscriptEntry {
            request_digest: request_digest(messages),
            reply_text: reply.clone(),
        });
        Ok(reply)
    }

    fn telemetry(&self) -> TelemetrySnapshot {
        self.inner.telemetry()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_in_order_then_errors() {
        let b = ScriptedBackend::from_replies(["a", "b", "c"]);
        let m = [ChatMessage::user("hi")];
        assert_eq!(b.complete(&m).unwrap(), "a");
        assert_eq!(b.complete(&m).unwrap(), "b");
        assert_eq!(b.complete(&m).unwrap(), "c");
        assert!(matches!(b.complete(&m), Err(LlmError::Exhausted(3))));
    }

    #[test]
    fn strict_replay_checks_digest() {
        let m = [ChatMessage::user("hi")];
        let b = ScriptedBackend::new(vec![TranscriptEntry {
            request_digest: request_digest(&m),
            reply_text: "ok".into(),
        }])
        .strict();
        assert!(matches!(
            b.complete(&[ChatMessage::user("other")]),
            Err(LlmError::DigestMismatch { index: 0 })
        ));
        assert_eq!(b.complete(&m).unwrap(), "ok");
    }

    #[test]
    fn recording_round_trips_through_file() {
        let rec = RecordingBackend::new(ScriptedBackend::from_replies(["x", "y"]));
        let a = [ChatMessage::user("1")];
        let b = [ChatMessage::user("2")];
        rec.complete(&a).unwrap();
        rec.complete(&b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        rec.save(&path).unwrap();
        let replay = ScriptedBackend::load(&path).unwrap().strict();
        assert_eq!(replay.complete(&a).unwrap(), "x");
        assert_eq!(replay.complete(&b).unwrap(), "y");
        assert_eq!(replay.remaining(), 0);
    }
}
