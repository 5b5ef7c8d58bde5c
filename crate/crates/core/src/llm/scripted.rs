use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    estimate_history, estimate_tokens, preflight, BackendConfig, ChatBackend, ChatMessage,
    Completion, LlmError, Usage,
};
use crate::toolbox::ToolSpec;

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptEntry {
    Assistant(String),
    /// One of `context_overflow`, `auth`, `network`, `timeout`,
    /// `malformed_response`.
    Error(String),
}

const ERROR_KINDS: [&str; 5] = [
    "context_overflow",
    "auth",
    "network",
    "timeout",
    "malformed_response",
];

/// Replays assistant turns from a JSONL file. Holds a cursor, so each run
/// needs its own instance.
#[derive(Debug)]
pub struct ScriptedBackend {
    config: BackendConfig,
    entries: Vec<ScriptEntry>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn load(config: BackendConfig) -> Result<Self, LlmError> {
        let path = config.script_path.clone().ok_or_else(|| {
            LlmError::InvalidConfig("scripted backend requires script_path".into())
        })?;
        let entries = read_script(&path)?;
        Ok(Self::from_entries(config, entries))
    }

    pub fn from_entries(config: BackendConfig, entries: Vec<ScriptEntry>) -> Self {
        ScriptedBackend {
            config,
            entries,
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.cursor
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, LlmError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry =
            serde_json::from_str(line).map_err(|e| LlmError::MalformedScript {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if let ScriptEntry::Error(kind) = &entry {
            if !ERROR_KINDS.contains(&kind.as_str()) {
                return Err(LlmError::MalformedScript {
                    line: idx + 1,
                    message: format!("unknown error kind `{kind}`"),
                });
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn read_script(path: &Path) -> Result<Vec<ScriptEntry>, LlmError> {
    let text = fs::read_to_string(path).map_err(|e| LlmError::MalformedScript {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_script(&text)
}

impl ChatBackend for ScriptedBackend {
    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn complete(
        &mut self,
        history: &[ChatMessage],
        _tools: Option<&[ToolSpec]>,
    ) -> Result<Completion, LlmError> {
        let prompt_tokens = preflight(history, self.config.max_context_tokens)?;
        let entry = self
            .entries
            .get(self.cursor)
            .cloned()
            .ok_or(LlmError::ScriptExhausted(self.entries.len()))?;
        self.cursor += 1;
        match entry {
            ScriptEntry::Assistant(text) => Ok(Completion {
                usage: Usage {
                    prompt_tokens,
                    completion_tokens: estimate_tokens(&text),
                    estimated: true,
                },
                message: ChatMessage::assistant(text),
            }),
            ScriptEntry::Error(kind) => Err(match kind.as_str() {
                "context_overflow" => LlmError::ContextOverflow {
                    prompt_tokens: estimate_history(history),
                    limit: self.config.max_context_tokens,
                },
                "auth" => LlmError::Auth("scripted auth failure".into()),
                "network" => LlmError::Network("scripted network failure".into()),
                "timeout" => LlmError::Timeout,
                _ => LlmError::MalformedResponse("scripted malformed response".into()),
            }),
        }
    }
}
