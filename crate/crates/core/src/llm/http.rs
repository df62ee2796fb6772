//! Chat-completions HTTP adapter.
//!
//! Speaks the common `POST {base_url}/chat/completions` wire format with a
//! bearer token read from a configurable environment variable. Each call
//! is a single attempt; wrap in [`super::Retrying`] for backoff.

use serde::Deserialize;

use super::{ChatRequest, LlmBackend, LlmError, Role};

/// Endpoint configuration for a live chat-completion service.
#[derive(Debug, Clone)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: u64,
}

impl LlmEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        LlmEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: "LLM_API_KEY".into(),
            timeout_s: 120,
        }
    }
}

pub struct HttpLlmBackend {
    endpoint: LlmEndpoint,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: String,
}

fn role_str(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

impl HttpLlmBackend {
    pub fn new(endpoint: LlmEndpoint) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(endpoint.timeout_s))
            .build()
            .map_err(|e| LlmError::Backend { attempts: 0, message: e.to_string() })?;
        Ok(HttpLlmBackend { endpoint, client })
    }

    fn api_key(&self) -> Result<String, LlmError> {
        std::env::var(&self.endpoint.api_key_env).map_err(|_| {
            LlmError::Backend {
                attempts: 1,
                message: format!("environment variable {} is not set", self.endpoint.api_key_env),
            }
        })
    }
}

impl LlmBackend for HttpLlmBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::InvalidRequest("request has no messages".into()));
        }
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "messages": request
                .messages
                .iter()
                .map(|m| serde_json::json!({"role": role_str(m.role), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_output_units,
            "stop": request.decode.stop_markers,
        });
        let url = format!("{}/chat/completions", self.endpoint.base_url.trim_end_matches('/'));
        let response = self
            .client
            .post(&url)
            .bearer_auth(self.api_key()?)
            .json(&body)
            .send()
            .map_err(|e| {
                // Connection failures and timeouts are worth retrying.
                LlmError::Transient(format!("request to {url} failed: {e}"))
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| LlmError::Transient(format!("reading response body failed: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(LlmError::Backend { attempts: 1, message: format!("HTTP {status}: {text}") });
        }
        let completion: Completion = serde_json::from_str(&text).map_err(|e| LlmError::Backend {
            attempts: 1,
            message: format!("unparseable completion body: {e}"),
        })?;
        let choice = completion.choices.into_iter().next().ok_or(LlmError::Backend {
            attempts: 1,
            message: "completion has no choices".into(),
        })?;
        let mut content = choice.message.content;
        // Stop-marker reattachment: servers cut the text *before* the stop
        // sequence, so an opened tool call loses its closing tag.
        if choice.finish_reason.as_deref() == Some("stop")
            && content.contains(crate::trajectory::TOOL_CALL_OPEN)
            && !content.contains(crate::trajectory::TOOL_CALL_CLOSE)
        {
            content.push_str(crate::trajectory::TOOL_CALL_CLOSE);
        }
        Ok(content)
    }
}
