//! Chat sessions over interchangeable completion backends.
//!
//! A [`ChatSession`] keeps the conversation so far and sends it in full on
//! every turn. Backends only see an ordered message list and answer with a
//! [`BackendResponse`]; whether that comes from an HTTP endpoint or a
//! replay cassette is invisible to the caller.

mod cassette;
mod http;
mod ledger;

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{
    Cassette, CassetteError, CassetteStep, MatchMode, RecordingBackend, ReplayBackend,
    CASSETTE_VERSION,
};
pub use http::{HttpBackend, HttpBackendConfig};
pub use ledger::{LedgerEntry, Pricing, UsageLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseStatus {
    Ok,
    Refused,
    ContextOverflow,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub status: ResponseStatus,
    /// Token counts are a length-based estimate, not provider-reported.
    #[serde(default)]
    pub usage_estimated: bool,
    /// Human-readable cause for non-ok statuses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl BackendResponse {
    pub fn ok(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            text: text.into(),
            input_tokens,
            output_tokens,
            status: ResponseStatus::Ok,
            usage_estimated: false,
            detail: None,
        }
    }

    pub fn failure(status: ResponseStatus, detail: impl Into<String>) -> Self {
        Self {
            text: String::new(),
            input_tokens: 0,
            output_tokens: 0,
            status,
            usage_estimated: false,
            detail: Some(detail.into()),
        }
    }
}

/// ⌈chars/4⌉, used when a backend reply carries no usage report.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

pub trait ChatBackend: Send + Sync {
    /// Completes the conversation. Must not panic on provider errors; those
    /// are reported through [`BackendResponse::status`].
    fn complete(&self, messages: &[ChatMessage]) -> BackendResponse;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SendError {
    #[error("backend refused the request: {0}")]
    Refused(String),
    #[error("request exceeded the backend context window: {0}")]
    ContextOverflow(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("user message must not be empty")]
    EmptyMessage,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "session-{}", self.0)
    }
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

/// Named backends plus the transport retry budget shared by their sessions.
#[derive(Clone)]
pub struct Gateway {
    backends: HashMap<String, Arc<dyn ChatBackend>>,
    transport_retries: u32,
}

impl Default for Gateway {
    fn default() -> Self {
        Self {
            backends: HashMap::new(),
            transport_retries: 2,
        }
    }
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.backends.keys().collect();
        names.sort();
        f.debug_struct("Gateway")
            .field("backends", &names)
            .field("transport_retries", &self.transport_retries)
            .finish()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_backend(mut self, id: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Self {
        self.register(id, backend);
        self
    }

    pub fn register(&mut self, id: impl Into<String>, backend: Arc<dyn ChatBackend>) {
        self.backends.insert(id.into(), backend);
    }

    pub fn set_transport_retries(&mut self, retries: u32) {
        self.transport_retries = retries;
    }

    pub fn open_session(
        &self,
        backend_id: &str,
        system_text: Option<&str>,
    ) -> Result<ChatSession, GatewayError> {
        let backend = self
            .backends
            .get(backend_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))?;
        let messages = system_text
            .map(|s| vec![ChatMessage::system(s)])
            .unwrap_or_default();
        Ok(ChatSession {
            id: SessionId(NEXT_SESSION.fetch_add(1, Ordering::Relaxed)),
            backend_id: backend_id.to_string(),
            backend,
            messages,
            transport_retries: self.transport_retries,
        })
    }
}

/// Conversation with one backend. Not meant to be shared between threads
/// while a send is in flight; open one session per task instead.
pub struct ChatSession {
    id: SessionId,
    backend_id: String,
    backend: Arc<dyn ChatBackend>,
    messages: Vec<ChatMessage>,
    transport_retries: u32,
}

impl fmt::Debug for ChatSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatSession")
            .field("id", &self.id)
            .field("backend_id", &self.backend_id)
            .field("messages", &self.messages.len())
            .finish()
    }
}

impl ChatSession {
    pub fn id(&self) -> SessionId {
        self.id
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    /// Sends `user_text` with the whole history. On success the user turn and
    /// the reply are appended and the ledger is charged under `step`. Failed
    /// calls leave both the session and the ledger untouched. Transport
    /// failures are retried with the identical request; refusals and context
    /// overflows are returned immediately.
    pub fn send(
        &mut self,
        user_text: &str,
        ledger: &UsageLedger,
        step: &str,
    ) -> Result<BackendResponse, SendError> {
        if user_text.trim().is_empty() {
            return Err(SendError::EmptyMessage);
        }
        let mut request = self.messages.clone();
        request.push(ChatMessage::user(user_text));

        let mut attempt = 0;
        let response = loop {
            let mut response = self.backend.complete(&request);
            if response.status == ResponseStatus::Ok && response.text.trim().is_empty() {
                response = BackendResponse::failure(
                    ResponseStatus::TransportError,
                    "backend returned an empty reply",
                );
            }
            if response.status == ResponseStatus::TransportError
                && attempt < self.transport_retries
            {
                attempt += 1;
                log::warn!(
                    "{}: transport error on {step} ({}), retry {attempt}/{}",
                    self.id,
                    response.detail.as_deref().unwrap_or("no detail"),
                    self.transport_retries
                );
                continue;
            }
            break response;
        };

        let detail = || response.detail.clone().unwrap_or_default();
        match response.status {
            ResponseStatus::Ok => {
                ledger.record(LedgerEntry {
                    step: step.to_string(),
                    input_tokens: response.input_tokens,
                    output_tokens: response.output_tokens,
                    estimated: response.usage_estimated,
                });
                self.messages = request;
                self.messages.push(ChatMessage::assistant(response.text.clone()));
                Ok(response)
            }
            ResponseStatus::Refused => Err(SendError::Refused(detail())),
            ResponseStatus::ContextOverflow => Err(SendError::ContextOverflow(detail())),
            ResponseStatus::TransportError => Err(SendError::Transport(detail())),
        }
    }
}
