//! Completion backends: a uniform chat-completion interface over HTTP
//! services, scripted mocks and the oracle, plus a content-addressed disk
//! cache.

mod cache;
mod http;
mod oracle;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::CachedBackend;
pub use http::{ConcurrencyLimiter, HttpChatBackend, HttpProfile, ProfileSet, ENV_API_KEY, ENV_BASE_URL, ENV_CACHE_DIR};
pub use oracle::OracleBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// A chat-completion request. Temperature defaults to `0.0`; profiles for
/// reasoning models drop it when the request is sent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: Option<f64>,
    /// JSON schema the response should conform to, when the backend can
    /// constrain its output.
    pub constrained_schema: Option<String>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: Some(0.0),
            constrained_schema: None,
        }
    }

    /// Single user-turn request.
    pub fn user(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self::new(model_id, vec![Message::user(prompt)])
    }

    /// Content of the last user message.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    fn check(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::BadRequest("request has no messages".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    ScriptedMock,
    OracleBacked,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("script of backend {identity} exhausted after {calls} calls")]
    ScriptExhausted { identity: String, calls: usize },
    #[error("cache error: {0}")]
    Cache(String),
}

/// A source of chat completions.
pub trait CompletionBackend: Send + Sync {
    /// Stable name used in metadata and cache keys.
    fn identity(&self) -> &str;

    fn kind(&self) -> BackendKind;

    /// Whether the backend honors `constrained_schema`.
    fn supports_constrained_output(&self) -> bool {
        false
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Arc<B> {
    fn identity(&self) -> &str {
        (**self).identity()
    }
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }
    fn supports_constrained_output(&self) -> bool {
        (**self).supports_constrained_output()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn identity(&self) -> &str {
        (**self).identity()
    }
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }
    fn supports_constrained_output(&self) -> bool {
        (**self).supports_constrained_output()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Digest over the backend identity and the canonicalized request, as
/// lowercase hex SHA-256.
pub fn cache_key(identity: &str, request: &CompletionRequest) -> String {
    let messages: Vec<_> = request
        .messages
        .iter()
        .map(|m| json!([m.role, m.content]))
        .collect();
    let canonical = json!({
        "identity": identity,
        "model_id": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "constrained_schema": request.constrained_schema,
    });
    let bytes = serde_json::to_vec(&canonical).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// Replays a fixed list of responses in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    identity: String,
    script: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
    requests: Mutex<Vec<CompletionRequest>>,
    constrained: bool,
}

impl ScriptedBackend {
    pub fn new(identity: impl Into<String>, script: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            identity: identity.into(),
            script: Mutex::new(script.into_iter().map(Into::into).collect()),
            calls: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
            constrained: false,
        }
    }

    /// Advertise constrained-output support.
    pub fn with_constrained_output(mut self) -> Self {
        self.constrained = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every request received so far.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedMock
    }

    fn supports_constrained_output(&self) -> bool {
        self.constrained
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        let calls = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        self.requests.lock().unwrap().push(request.clone());
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| BackendError::ScriptExhausted {
                identity: self.identity.clone(),
                calls: calls - 1,
            })
    }
}

type ResponderFn = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;

/// A mock whose responses are computed from the request.
pub struct FnBackend {
    identity: String,
    responder: Box<ResponderFn>,
    calls: AtomicUsize,
}

impl FnBackend {
    pub fn new(
        identity: impl Into<String>,
        responder: impl Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            identity: identity.into(),
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for FnBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn kind(&self) -> BackendKind {
        BackendKind::ScriptedMock
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.check()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.responder)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order() {
        let b = ScriptedBackend::new("mock", ["A", "B"]);
        let r = CompletionRequest::user("m", "hi");
        assert_eq!(b.complete(&r).unwrap(), "A");
        assert_eq!(b.complete(&r).unwrap(), "B");
        assert!(matches!(b.complete(&r), Err(BackendError::ScriptExhausted { calls: 2, .. })));
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn empty_request_rejected() {
        let b = ScriptedBackend::new("mock", ["A"]);
        let r = CompletionRequest::new("m", vec![]);
        assert!(matches!(b.complete(&r), Err(BackendError::BadRequest(_))));
    }

    #[test]
    fn cache_key_laws() {
        let r = CompletionRequest::new("m", vec![Message::system("s"), Message::user("u")]);
        assert_eq!(cache_key("id", &r), cache_key("id", &r));
        assert_eq!(cache_key("id", &r).len(), 64);

        let mut warm = r.clone();
        warm.temperature = Some(0.7);
        assert_ne!(cache_key("id", &r), cache_key("id", &warm));

        let mut swapped = r.clone();
        swapped.messages.reverse();
        assert_ne!(cache_key("id", &r), cache_key("id", &swapped));

        assert_ne!(cache_key("id", &r), cache_key("other", &r));
    }

    #[test]
    fn cache_key_is_pinned() {
        // Guards against accidental changes to the canonical form, which
        // would orphan every existing cache entry.
        let r = CompletionRequest::user("gpt-4o-2024-08-06", "hello");
        assert_eq!(
            cache_key("http:gpt-4o", &r),
            hex::encode(Sha256::digest(
                br#"{"identity":"http:gpt-4o","model_id":"gpt-4o-2024-08-06","messages":[["user","hello"]],"temperature":0.0,"constrained_schema":null}"#
            ))
        );
    }
}
