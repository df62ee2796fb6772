//! Uniform chat-completion interface: a trait over any backend, a fully
//! scripted mock for deterministic tests, a retry wrapper for transient
//! failures, and an audit log that records every call.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[cfg(feature = "live")]
mod http;
#[cfg(feature = "live")]
pub use http::{HttpLlmBackend, LlmEndpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message { role, content: content.into() }
    }
}

/// Decode parameters forwarded to the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_units: u64,
    pub stop_markers: Vec<String>,
}

impl DecodeParams {
    /// Rollout default: temperature 1.0 for diversity within groups, with
    /// the tool-call close tag as a stop marker so the loop regains
    /// control after each action.
    pub fn rollout() -> Self {
        DecodeParams {
            temperature: 1.0,
            max_output_units: 8_192,
            stop_markers: vec![crate::trajectory::TOOL_CALL_CLOSE.to_string()],
        }
    }

    /// Synthesis default: temperature 0.6.
    pub fn synthesis() -> Self {
        DecodeParams { temperature: 0.6, ..DecodeParams::rollout() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub decode: DecodeParams,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>, decode: DecodeParams) -> Self {
        ChatRequest { messages, decode }
    }

    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    /// Permanent failure, reported after any retries were spent.
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },
    /// Retryable failure; surfaced only by single-attempt backends and
    /// consumed by [`Retrying`].
    #[error("transient backend error: {0}")]
    Transient(String),
    /// The scripted mock ran out of (or failed to match) script entries,
    /// signalling a test/pipeline mismatch.
    #[error("scripted backend exhausted: {0}")]
    ScriptExhausted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Chat-completion backend. Implementations must be safe for concurrent
/// calls.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<T: LlmBackend + ?Sized> LlmBackend for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// Predicate on the last message of a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Matches when the last message contains the needle (empty needle
    /// matches anything).
    Substring(String),
    /// Matches when the SHA-256 hex of the last message equals the hash.
    ExactHash(String),
}

impl Matcher {
    pub fn matches(&self, last_message: &str) -> bool {
        match self {
            Matcher::Substring(needle) => last_message.contains(needle.as_str()),
            Matcher::ExactHash(hash) => &hash_text(last_message) == hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub response: String,
}

/// Deterministic mock backend replaying an ordered script. Matching is
/// serialized internally so concurrent callers still consume entries in
/// script order.
pub struct ScriptedBackend {
    script: Vec<ScriptEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        ScriptedBackend { script, cursor: Mutex::new(0) }
    }

    /// Script that replays responses in order regardless of request text.
    pub fn in_order<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend::new(
            responses
                .into_iter()
                .map(|r| ScriptEntry { matcher: Matcher::Substring(String::new()), response: r.into() })
                .collect(),
        )
    }

    pub fn remaining(&self) -> usize {
        self.script.len() - *self.cursor.lock().expect("script cursor lock")
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::InvalidRequest("request has no messages".into()));
        }
        let mut cursor = self.cursor.lock().expect("script cursor lock");
        let entry = self.script.get(*cursor).ok_or_else(|| {
            LlmError::ScriptExhausted(format!("all {} entries consumed", self.script.len()))
        })?;
        if !entry.matcher.matches(request.last_content()) {
            return Err(LlmError::ScriptExhausted(format!(
                "entry {} matcher {:?} did not match the last message",
                *cursor, entry.matcher
            )));
        }
        *cursor += 1;
        Ok(entry.response.clone())
    }
}

/// Retry wrapper: retries `Transient` failures up to `max_retries` times
/// with exponential backoff, then reports a permanent `Backend` error.
pub struct Retrying<B> {
    inner: B,
    max_retries: u32,
    base_delay_ms: u64,
}

impl<B> Retrying<B> {
    pub fn new(inner: B, max_retries: u32, base_delay_ms: u64) -> Self {
        Retrying { inner, max_retries, base_delay_ms }
    }
}

impl<B: LlmBackend> LlmBackend for Retrying<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.inner.complete(request) {
                Ok(text) => return Ok(text),
                Err(LlmError::Transient(message)) => {
                    if attempts > self.max_retries {
                        return Err(LlmError::Backend { attempts, message });
                    }
                    let delay = self.base_delay_ms.saturating_mul(1 << (attempts - 1).min(16));
                    if delay > 0 {
                        std::thread::sleep(std::time::Duration::from_millis(delay));
                    }
                }
                Err(other) => return Err(other),
            }
        }
    }
}

pub fn hash_text(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Canonical request hash: roles and contents in order, plus temperature.
pub fn request_hash(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    for m in &request.messages {
        hasher.update(format!("{:?}\u{1f}", m.role).as_bytes());
        hasher.update(m.content.as_bytes());
        hasher.update([0x1e]);
    }
    hasher.update(request.decode.temperature.to_le_bytes());
    format!("{:x}", hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub request_hash: String,
    pub response_hash: String,
    pub latency_ms: u128,
    pub ok: bool,
}

/// Append-only record of every `complete()` call made through an
/// [`Audited`] wrapper. Latency never reaches output files, so audited
/// pipelines stay byte-reproducible.
#[derive(Default)]
pub struct AuditLog {
    entries: Mutex<Vec<AuditEntry>>,
}

impl AuditLog {
    pub fn new() -> Arc<AuditLog> {
        Arc::new(AuditLog::default())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("audit lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<AuditEntry> {
        self.entries.lock().expect("audit lock").clone()
    }

    fn push(&self, entry: AuditEntry) {
        self.entries.lock().expect("audit lock").push(entry);
    }
}

/// Wrapper that appends one audit entry per `complete()` call.
pub struct Audited<B> {
    inner: B,
    log: Arc<AuditLog>,
}

impl<B> Audited<B> {
    pub fn new(inner: B, log: Arc<AuditLog>) -> Self {
        Audited { inner, log }
    }
}

impl<B: LlmBackend> LlmBackend for Audited<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let started = Instant::now();
        let result = self.inner.complete(request);
        let response_hash = match &result {
            Ok(text) => hash_text(text),
            Err(err) => hash_text(&err.to_string()),
        };
        self.log.push(AuditEntry {
            request_hash: request_hash(request),
            response_hash,
            latency_ms: started.elapsed().as_millis(),
            ok: result.is_ok(),
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(content: &str) -> ChatRequest {
        ChatRequest::new(vec![Message::new(Role::User, content)], DecodeParams::rollout())
    }

    #[test]
    fn scripted_matches_in_order() {
        let backend = ScriptedBackend::new(vec![
            ScriptEntry { matcher: Matcher::Substring("hello".into()), response: "hi".into() },
            ScriptEntry {
                matcher: Matcher::ExactHash(hash_text("exact")),
                response: "matched".into(),
            },
        ]);
        assert_eq!(backend.complete(&request("well hello there")).unwrap(), "hi");
        assert_eq!(backend.complete(&request("exact")).unwrap(), "matched");
        assert!(matches!(
            backend.complete(&request("anything")),
            Err(LlmError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn unmatched_entry_is_script_exhausted() {
        let backend = ScriptedBackend::new(vec![ScriptEntry {
            matcher: Matcher::Substring("needle".into()),
            response: "r".into(),
        }]);
        assert!(matches!(
            backend.complete(&request("no match here")),
            Err(LlmError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let backend = ScriptedBackend::in_order(["a", "b", "c"]);
            (0..3).map(|i| backend.complete(&request(&format!("m{i}"))).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    struct Flaky {
        failures: AtomicU32,
        attempts: Arc<AtomicU32>,
    }

    impl LlmBackend for Flaky {
        fn complete(&self, _request: &ChatRequest) -> Result<String, LlmError> {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            if self.failures.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| f.checked_sub(1)).is_ok()
            {
                Err(LlmError::Transient("injected".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retry_recovers_after_transient_failures() {
        let attempts = Arc::new(AtomicU32::new(0));
        let backend = Retrying::new(
            Flaky { failures: AtomicU32::new(2), attempts: attempts.clone() },
            3,
            0,
        );
        assert_eq!(backend.complete(&request("x")).unwrap(), "ok");
        assert_eq!(attempts.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_gives_up_after_budget() {
        let attempts = Arc::new(AtomicU32::new(0));
        let backend = Retrying::new(
            Flaky { failures: AtomicU32::new(10), attempts: attempts.clone() },
            2,
            0,
        );
        match backend.complete(&request("x")) {
            Err(LlmError::Backend { attempts: a, .. }) => assert_eq!(a, 3),
            other => panic!("expected Backend error, got {other:?}"),
        }
        assert_eq!(attempts.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn audit_log_length_equals_call_count() {
        let log = AuditLog::new();
        let backend = Audited::new(ScriptedBackend::in_order(["a", "b"]), log.clone());
        backend.complete(&request("1")).unwrap();
        backend.complete(&request("2")).unwrap();
        let _ = backend.complete(&request("3"));
        assert_eq!(log.len(), 3);
        let entries = log.snapshot();
        assert!(entries[0].ok && entries[1].ok && !entries[2].ok);
        assert_ne!(entries[0].request_hash, entries[1].request_hash);
        assert_eq!(entries[0].response_hash, hash_text("a"));
    }

    #[test]
    fn empty_request_rejected() {
        let backend = ScriptedBackend::in_order(["a"]);
        let req = ChatRequest::new(vec![], DecodeParams::rollout());
        assert!(matches!(backend.complete(&req), Err(LlmError::InvalidRequest(_))));
    }
}
