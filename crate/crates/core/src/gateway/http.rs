//! OpenAI-compatible chat-completion endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{estimate_tokens, BackendResponse, ChatBackend, ChatMessage, ResponseStatus, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "https://dashscope.aliyuncs.com/compatible-mode/v1".into(),
            model: "qwen-long".into(),
            api_key: None,
            timeout_secs: 300,
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpBackendConfig,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()?;
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, messages: &[ChatMessage]) -> BackendResponse {
        let body = WireRequest {
            model: &self.config.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: role_name(m.role),
                    content: &m.text,
                })
                .collect(),
        };
        let mut request = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return BackendResponse::failure(ResponseStatus::TransportError, e.to_string()),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return BackendResponse::failure(ResponseStatus::TransportError, e.to_string()),
        };
        if !status.is_success() {
            return BackendResponse::failure(classify_error(status.as_u16(), &text), text);
        }

        let parsed: WireResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => {
                return BackendResponse::failure(
                    ResponseStatus::TransportError,
                    format!("unparseable completion: {e}"),
                )
            }
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return BackendResponse::failure(ResponseStatus::TransportError, "no choices returned");
        };
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return BackendResponse::failure(ResponseStatus::Refused, "finish_reason=content_filter");
        }
        let reply = choice.message.content.unwrap_or_default();
        let mut out = match parsed.usage {
            Some(u) => BackendResponse::ok(reply, u.prompt_tokens, u.completion_tokens),
            None => {
                let input: u64 = messages.iter().map(|m| estimate_tokens(&m.text)).sum();
                let output = estimate_tokens(&reply);
                let mut r = BackendResponse::ok(reply, input, output);
                r.usage_estimated = true;
                r
            }
        };
        if out.text.trim().is_empty() {
            out.status = ResponseStatus::TransportError;
            out.detail = Some("empty completion".into());
        }
        out
    }
}

/// Maps a provider error body onto refusal / overflow / transport.
fn classify_error(status: u16, body: &str) -> ResponseStatus {
    let code = serde_json::from_str::<Value>(body)
        .ok()
        .map(|v| {
            let err = v.get("error").cloned().unwrap_or(v);
            let code = err.get("code").and_then(Value::as_str).unwrap_or("");
            let msg = err.get("message").and_then(Value::as_str).unwrap_or("");
            format!("{code} {msg}")
        })
        .unwrap_or_else(|| body.to_string())
        .to_ascii_lowercase();

    const OVERFLOW: &[&str] = &[
        "context_length_exceeded",
        "maximum context length",
        "range of input length",
        "too long",
        "too many tokens",
    ];
    const REFUSAL: &[&str] = &[
        "data_inspection_failed",
        "content_filter",
        "inappropriate",
        "content_policy",
    ];
    if OVERFLOW.iter().any(|p| code.contains(p)) {
        ResponseStatus::ContextOverflow
    } else if REFUSAL.iter().any(|p| code.contains(p)) {
        ResponseStatus::Refused
    } else if status == 413 {
        ResponseStatus::ContextOverflow
    } else {
        ResponseStatus::TransportError
    }
}
