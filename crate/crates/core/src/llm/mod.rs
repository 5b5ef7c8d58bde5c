//! Chat-completion backends.
//!
//! Everything outside this module talks to a `dyn ChatBackend`; only
//! [`open_backend`] looks at [`BackendKind`].

mod http;
mod scripted;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::toolbox::ToolSpec;

pub use http::HttpBackend;
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        })
    }
}

/// A structured tool call returned by an endpoint with native tool calling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeToolCall {
    pub id: String,
    pub name: String,
    /// JSON-encoded arguments as sent by the endpoint.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_results_for: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<NativeToolCall>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Tool,
            content: content.into(),
            tool_results_for: Some(call_id.into()),
            tool_calls: Vec::new(),
        }
    }

    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
            tool_results_for: None,
            tool_calls: Vec::new(),
        }
    }

    /// Role/content invariants: tool messages name their call, and only an
    /// assistant message carrying structured calls may be empty.
    pub fn is_well_formed(&self) -> bool {
        match self.role {
            Role::Tool => self.tool_results_for.is_some(),
            Role::Assistant => !self.content.is_empty() || !self.tool_calls.is_empty(),
            _ => !self.content.is_empty() || self.role == Role::System,
        }
    }

    fn estimated_tokens(&self) -> u64 {
        let calls: u64 = self
            .tool_calls
            .iter()
            .map(|c| estimate_tokens(&c.name) + estimate_tokens(&c.arguments))
            .sum();
        estimate_tokens(&self.content) + calls
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

fn default_timeout_s() -> u64 {
    300
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: String,
    pub max_context_tokens: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    /// The endpoint accepts a `tools` parameter and returns structured calls.
    #[serde(default)]
    pub native_tools: bool,
    #[serde(default = "default_timeout_s")]
    pub request_timeout_s: u64,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl BackendConfig {
    pub fn scripted(script_path: impl Into<PathBuf>, max_context_tokens: u64) -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: "scripted".into(),
            max_context_tokens,
            temperature: 0.0,
            api_key_env: None,
            script_path: Some(script_path.into()),
            native_tools: false,
            request_timeout_s: default_timeout_s(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(m.to_string()));
        if self.max_context_tokens == 0 {
            return bad("max_context_tokens must be > 0");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        match self.kind {
            BackendKind::Http => {
                if self.endpoint.as_deref().unwrap_or("").is_empty() {
                    return bad("http backend requires an endpoint");
                }
                if self.api_key_env.as_deref().unwrap_or("").is_empty() {
                    return bad("http backend requires api_key_env");
                }
            }
            BackendKind::Scripted => {
                if self.script_path.is_none() {
                    return bad("scripted backend requires script_path");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// The backend reported nothing and the byte heuristic was used.
    pub estimated: bool,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub message: ChatMessage,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("context overflow: {prompt_tokens} prompt tokens exceed the limit of {limit}")]
    ContextOverflow { prompt_tokens: u64, limit: u64 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("malformed script at line {line}: {message}")]
    MalformedScript { line: usize, message: String },
    #[error("script exhausted after {0} entries")]
    ScriptExhausted(usize),
}

impl LlmError {
    /// Errors worth another attempt: transport failures and 5xx.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            LlmError::Network(_) | LlmError::Timeout | LlmError::Server { .. }
        )
    }
}

pub trait ChatBackend: Send {
    fn config(&self) -> &BackendConfig;

    /// One assistant turn for `history`. `tools` is offered to endpoints with
    /// native tool calling and ignored otherwise.
    fn complete(
        &mut self,
        history: &[ChatMessage],
        tools: Option<&[ToolSpec]>,
    ) -> Result<Completion, LlmError>;
}

pub fn open_backend(config: &BackendConfig) -> Result<Box<dyn ChatBackend>, LlmError> {
    config.validate()?;
    Ok(match config.kind {
        BackendKind::Http => Box::new(HttpBackend::new(config.clone())?),
        BackendKind::Scripted => Box::new(ScriptedBackend::load(config.clone())?),
    })
}

/// Conservative token estimate: `ceil(bytes / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

pub fn estimate_history(history: &[ChatMessage]) -> u64 {
    history.iter().map(ChatMessage::estimated_tokens).sum()
}

/// Shared request checks: non-empty history starting with a system message,
/// and an estimated prompt within `limit`. Returns the estimate.
pub(crate) fn preflight(history: &[ChatMessage], limit: u64) -> Result<u64, LlmError> {
    let first = history
        .first()
        .ok_or_else(|| LlmError::Precondition("history is empty".into()))?;
    if first.role != Role::System {
        return Err(LlmError::Precondition(
            "first message must have role system".into(),
        ));
    }
    let prompt_tokens = estimate_history(history);
    if prompt_tokens > limit {
        return Err(LlmError::ContextOverflow {
            prompt_tokens,
            limit,
        });
    }
    Ok(prompt_tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
    }

    #[test]
    fn preflight_checks() {
        assert!(matches!(preflight(&[], 10), Err(LlmError::Precondition(_))));
        assert!(matches!(
            preflight(&[ChatMessage::user("hi")], 10),
            Err(LlmError::Precondition(_))
        ));
        let h = [
            ChatMessage::system("x".repeat(40)),
            ChatMessage::user("y".repeat(41)),
        ];
        assert_eq!(preflight(&h, 21), Ok(21));
        assert_eq!(
            preflight(&h, 20),
            Err(LlmError::ContextOverflow {
                prompt_tokens: 21,
                limit: 20
            })
        );
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::scripted("s.jsonl", 100);
        assert!(c.validate().is_ok());
        c.max_context_tokens = 0;
        assert!(c.validate().is_err());
        let mut h = BackendConfig::scripted("s.jsonl", 100);
        h.kind = BackendKind::Http;
        assert!(h.validate().is_err());
        h.endpoint = Some("http://localhost:1".into());
        assert!(h.validate().is_err());
        h.api_key_env = Some("KEY".into());
        assert!(h.validate().is_ok());
    }

    #[test]
    fn message_invariants() {
        assert!(ChatMessage::tool("c1", "out").is_well_formed());
        let mut t = ChatMessage::tool("c1", "out");
        t.tool_results_for = None;
        assert!(!t.is_well_formed());
        assert!(!ChatMessage::assistant("").is_well_formed());
        let mut a = ChatMessage::assistant("");
        a.tool_calls.push(NativeToolCall {
            id: "1".into(),
            name: "shell_exec".into(),
            arguments: "{}".into(),
        });
        assert!(a.is_well_formed());
    }

    proptest! {
        #[test]
        fn estimate_is_monotone_and_subadditive(a in ".{0,200}", b in ".{0,200}") {
            let joined = format!("{a}{b}");
            prop_assert!(estimate_tokens(&a) <= estimate_tokens(&joined));
            prop_assert!(estimate_tokens(&joined) <= estimate_tokens(&a) + estimate_tokens(&b) + 1);
        }
    }
}
