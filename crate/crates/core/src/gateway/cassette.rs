//! Replay cassettes: recorded backend exchanges for deterministic offline runs.

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BackendResponse, ChatBackend, ChatMessage, ResponseStatus, Role};

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cassette is not valid JSON: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported cassette version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteStep {
    pub expected_user_text: String,
    #[serde(default)]
    pub reply_text: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
    pub status: ResponseStatus,
}

impl CassetteStep {
    pub fn ok(
        expected_user_text: impl Into<String>,
        reply_text: impl Into<String>,
        input_tokens: u64,
        output_tokens: u64,
    ) -> Self {
        Self {
            expected_user_text: expected_user_text.into(),
            reply_text: reply_text.into(),
            input_tokens,
            output_tokens,
            status: ResponseStatus::Ok,
        }
    }

    pub fn failed(expected_user_text: impl Into<String>, status: ResponseStatus) -> Self {
        Self {
            expected_user_text: expected_user_text.into(),
            reply_text: String::new(),
            input_tokens: 0,
            output_tokens: 0,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// The request's last user message must equal the expected text.
    #[default]
    Exact,
    /// The expected text need only be a prefix of the last user message.
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    #[serde(default)]
    pub match_mode: MatchMode,
    pub steps: Vec<CassetteStep>,
}

impl Default for Cassette {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl Cassette {
    pub fn new(steps: Vec<CassetteStep>) -> Self {
        Self {
            version: CASSETTE_VERSION,
            match_mode: MatchMode::Exact,
            steps,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CassetteError> {
        // Check the header before the body so a future layout reports a
        // version error rather than a confusing field error.
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != CASSETTE_VERSION {
            return Err(CassetteError::Version {
                found: header.version,
                expected: CASSETTE_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CassetteError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cassette serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CassetteError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| CassetteError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn last_user_text(messages: &[ChatMessage]) -> &str {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.text.as_str())
        .unwrap_or("")
}

/// Serves cassette steps strictly in order. A request that does not match
/// the next step is answered with a transport error and does not advance
/// the cursor.
#[derive(Debug)]
pub struct ReplayBackend {
    cassette: Cassette,
    cursor: Mutex<usize>,
    requests: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self {
            cassette,
            cursor: Mutex::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CassetteError> {
        Ok(Self::new(Cassette::load(path)?))
    }

    /// Number of steps served so far.
    pub fn consumed(&self) -> usize {
        *self.cursor.lock().expect("cursor poisoned")
    }

    pub fn remaining(&self) -> usize {
        self.cassette.steps.len() - self.consumed()
    }

    /// Every request received, including unmatched ones.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.requests.lock().expect("requests poisoned").clone()
    }

    /// Number of requests received, including unmatched ones.
    pub fn call_count(&self) -> usize {
        self.requests.lock().expect("requests poisoned").len()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, messages: &[ChatMessage]) -> BackendResponse {
        self.requests
            .lock()
            .expect("requests poisoned")
            .push(messages.to_vec());
        let mut cursor = self.cursor.lock().expect("cursor poisoned");
        let Some(step) = self.cassette.steps.get(*cursor) else {
            return BackendResponse::failure(
                ResponseStatus::TransportError,
                format!("cassette exhausted after {} steps", self.cassette.steps.len()),
            );
        };
        let actual = last_user_text(messages);
        let matched = match self.cassette.match_mode {
            MatchMode::Exact => actual == step.expected_user_text,
            MatchMode::Prefix => actual.starts_with(&step.expected_user_text),
        };
        if !matched {
            return BackendResponse::failure(
                ResponseStatus::TransportError,
                format!(
                    "cassette mismatch at step {}: expected {:?}, got {:?}",
                    *cursor,
                    preview(&step.expected_user_text),
                    preview(actual)
                ),
            );
        }
        *cursor += 1;
        BackendResponse {
            text: step.reply_text.clone(),
            input_tokens: step.input_tokens,
            output_tokens: step.output_tokens,
            status: step.status,
            usage_estimated: false,
            detail: (step.status != ResponseStatus::Ok)
                .then(|| format!("recorded {:?}", step.status)),
        }
    }
}

fn preview(text: &str) -> String {
    const MAX: usize = 80;
    if text.chars().count() <= MAX {
        text.to_string()
    } else {
        text.chars().take(MAX).collect::<String>() + "…"
    }
}

/// Proxies another backend and captures every exchange as a cassette step.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    steps: Mutex<Vec<CassetteStep>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            steps: Mutex::new(Vec::new()),
        }
    }

    pub fn cassette(&self) -> Cassette {
        Cassette::new(self.steps.lock().expect("steps poisoned").clone())
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, messages: &[ChatMessage]) -> BackendResponse {
        let response = self.inner.complete(messages);
        // Transport failures and empty replies are retried by the session,
        // so recording them would make replay diverge from the live run.
        let retried = response.status == ResponseStatus::TransportError
            || (response.status == ResponseStatus::Ok && response.text.trim().is_empty());
        if !retried {
            self.steps.lock().expect("steps poisoned").push(CassetteStep {
                expected_user_text: last_user_text(messages).to_string(),
                reply_text: response.text.clone(),
                input_tokens: response.input_tokens,
                output_tokens: response.output_tokens,
                status: response.status,
            });
        }
        response
    }
}
