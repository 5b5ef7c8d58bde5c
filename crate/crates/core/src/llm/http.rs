use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    estimate_tokens, preflight, BackendConfig, ChatBackend, ChatMessage, Completion, LlmError,
    NativeToolCall, Role, Usage,
};
use crate::toolbox::{ArgType, ToolSpec};

const MAX_ATTEMPTS: u32 = 3;

/// Markers that providers use in 400 responses when the prompt is too long.
const OVERFLOW_MARKERS: [&str; 4] = [
    "context_length_exceeded",
    "maximum context length",
    "exceeds the maximum number of tokens",
    "too many tokens",
];

/// Client for endpoints speaking the common `/chat/completions` protocol.
///
/// Cheap to clone; the underlying connection pool is shared.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| LlmError::InvalidConfig("http backend requires an endpoint".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_s))
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        Ok(HttpBackend {
            config,
            client,
            url,
        })
    }

    fn api_key(&self) -> Result<String, LlmError> {
        let var = self.config.api_key_env.as_deref().unwrap_or_default();
        match std::env::var(var) {
            Ok(k) if !k.is_empty() => Ok(k),
            _ => Err(LlmError::Auth(format!(
                "environment variable {var} is not set"
            ))),
        }
    }

    fn request_body(&self, history: &[ChatMessage], tools: Option<&[ToolSpec]>) -> Value {
        let native = self.config.native_tools;
        let messages: Vec<Value> = history.iter().map(|m| wire_message(m, native)).collect();
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        if native {
            if let Some(specs) = tools.filter(|t| !t.is_empty()) {
                body["tools"] = Value::Array(specs.iter().map(wire_tool).collect());
            }
        }
        body
    }

    fn send_once(&self, key: &str, body: &Value) -> Result<Value, LlmError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout
                } else {
                    LlmError::Network(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| LlmError::Network(e.to_string()))?;
        match status {
            200..=299 => {
                serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))
            }
            401 | 403 => Err(LlmError::Auth(format!("status {status}"))),
            500..=599 => Err(LlmError::Server { status, body: text }),
            _ if is_overflow_message(&text) => Err(LlmError::ContextOverflow {
                prompt_tokens: 0,
                limit: self.config.max_context_tokens,
            }),
            _ => Err(LlmError::MalformedResponse(format!(
                "status {status}: {text}"
            ))),
        }
    }
}

fn is_overflow_message(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    OVERFLOW_MARKERS.iter().any(|m| lower.contains(m))
}

/// Without native tool calling, tool observations go back as user turns so
/// that any endpoint accepts the conversation.
fn wire_message(m: &ChatMessage, native: bool) -> Value {
    match (m.role, native) {
        (Role::Tool, true) => json!({
            "role": "tool",
            "content": m.content,
            "tool_call_id": m.tool_results_for,
        }),
        (Role::Tool, false) => json!({ "role": "user", "content": m.content }),
        (Role::Assistant, true) if !m.tool_calls.is_empty() => json!({
            "role": "assistant",
            "content": m.content,
            "tool_calls": m.tool_calls.iter().map(|c| json!({
                "id": c.id,
                "type": "function",
                "function": { "name": c.name, "arguments": c.arguments },
            })).collect::<Vec<_>>(),
        }),
        (role, _) => json!({ "role": role.to_string(), "content": m.content }),
    }
}

fn wire_tool(spec: &ToolSpec) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for arg in &spec.arg_schema {
        let ty = match arg.kind {
            ArgType::Integer => "integer",
            _ => "string",
        };
        properties.insert(arg.name.clone(), json!({ "type": ty }));
        if arg.required {
            required.push(arg.name.clone());
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": { "type": "object", "properties": properties, "required": required },
        }
    })
}

fn parse_response(body: &Value, prompt_estimate: u64) -> Result<Completion, LlmError> {
    let malformed = |m: &str| LlmError::MalformedResponse(m.to_string());
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| malformed("missing choices[0].message"))?;
    let content = match msg.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("content is not a string")),
    };
    let mut tool_calls = Vec::new();
    if let Some(calls) = msg.get("tool_calls").and_then(Value::as_array) {
        for c in calls {
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("tool call without function name"))?;
            let arguments = match c.pointer("/function/arguments") {
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
                None => "{}".to_string(),
            };
            let id = c.get("id").and_then(Value::as_str).unwrap_or_default();
            tool_calls.push(NativeToolCall {
                id: id.to_string(),
                name: name.to_string(),
                arguments,
            });
        }
    }
    let message = ChatMessage {
        role: Role::Assistant,
        content,
        tool_results_for: None,
        tool_calls,
    };
    let reported = body.get("usage").and_then(|u| {
        Some((
            u.get("prompt_tokens")?.as_u64()?,
            u.get("completion_tokens")?.as_u64()?,
        ))
    });
    let usage = match reported {
        Some((p, c)) => Usage {
            prompt_tokens: p,
            completion_tokens: c,
            estimated: false,
        },
        None => Usage {
            prompt_tokens: prompt_estimate,
            completion_tokens: estimate_tokens(&message.content),
            estimated: true,
        },
    };
    Ok(Completion { message, usage })
}

impl ChatBackend for HttpBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn complete(
        &mut self,
        history: &[ChatMessage],
        tools: Option<&[ToolSpec]>,
    ) -> Result<Completion, LlmError> {
        let limit = self.config.max_context_tokens;
        let estimate = preflight(history, limit)?;
        let key = self.api_key()?;
        let body = self.request_body(history, tools);

        let mut attempt = 0;
        let raw = loop {
            match self.send_once(&key, &body) {
                Ok(v) => break v,
                Err(e) if e.is_retryable() && attempt + 1 < MAX_ATTEMPTS => {
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt);
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(LlmError::ContextOverflow { limit, .. }) => {
                    return Err(LlmError::ContextOverflow {
                        prompt_tokens: estimate,
                        limit,
                    })
                }
                Err(e) => return Err(e),
            }
        };
        let completion = parse_response(&raw, estimate)?;
        if completion.usage.prompt_tokens > limit {
            return Err(LlmError::ContextOverflow {
                prompt_tokens: completion.usage.prompt_tokens,
                limit,
            });
        }
        Ok(completion)
    }
}
