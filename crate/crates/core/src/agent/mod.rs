//! The agent loop: prompt rendering, tool-call parsing, patch application,
//! workspace change tracking and run traces.

mod files;
mod parse;
mod patch;
mod prompt;
mod run;
mod trace;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::BackendConfig;
use crate::toolbox::{Catalog, Limits, DEFAULT_OUTPUT_CAP, DEFAULT_TIMEOUT_S};

pub use files::{snapshot_workspace, track_modified_files, FileHashes};
pub use parse::{
    parse_assistant, parse_tool_calls, CallOrigin, FencedBlock, ParsedReply, ToolCall,
};
pub use patch::{apply_patch, PatchError, PatchReport, RejectedHunk};
pub use prompt::{
    render_system_prompt, render_user_prompt, BASELINE_PROMPT, GATE_REMINDER, STRUCTURED_PROMPT,
};
pub use run::{run_agent, run_agent_with_backend, RunContext, DEADLOCK_TURNS};
pub use trace::{
    events_path, read_trace, render_replay, trace_path, write_trace, CrashReason, EventLog,
    RunStatus, RunTrace, Turn,
};

pub const DEFAULT_MAX_TURNS: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    /// Free-form thought/action/observation prompt ending in a patch.
    Baseline,
    /// Five-step discover/plan/apply/verify/complete prompt.
    Structured,
    /// Single pass: everything inline, one answer, no tools.
    None,
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptVariant::Baseline => "baseline",
            PromptVariant::Structured => "structured",
            PromptVariant::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("prompt variant `{variant}` cannot be paired with the `{catalog}` catalog")]
    InvalidPairing {
        variant: PromptVariant,
        catalog: Catalog,
    },
    #[error("invalid agent config `{config_id}`: {message}")]
    InvalidConfig { config_id: String, message: String },
}

fn default_max_turns() -> u32 {
    DEFAULT_MAX_TURNS
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

fn default_cap() -> Option<usize> {
    Some(DEFAULT_OUTPUT_CAP)
}

mod cap_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cap: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(cap.unwrap_or(0) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        Ok(Option::<usize>::deserialize(d)?.filter(|&n| n > 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub config_id: String,
    pub prompt_variant: PromptVariant,
    pub catalog: Catalog,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default = "default_timeout")]
    pub per_call_timeout_s: u64,
    /// `None` disables output capping entirely. On disk, `0` and `null`
    /// both mean disabled, since TOML has no null.
    #[serde(default = "default_cap", with = "cap_serde")]
    pub output_cap_bytes: Option<usize>,
    /// Defaults to the backend's `max_context_tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_budget_tokens: Option<u64>,
    pub backend: BackendConfig,
}

impl AgentConfig {
    pub fn new(
        config_id: impl Into<String>,
        prompt_variant: PromptVariant,
        catalog: Catalog,
        backend: BackendConfig,
    ) -> Self {
        AgentConfig {
            config_id: config_id.into(),
            prompt_variant,
            catalog,
            max_turns: DEFAULT_MAX_TURNS,
            per_call_timeout_s: DEFAULT_TIMEOUT_S,
            output_cap_bytes: Some(DEFAULT_OUTPUT_CAP),
            context_budget_tokens: None,
            backend,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        check_pairing(self.prompt_variant, self.catalog)?;
        let bad = |message: &str| {
            Err(AgentError::InvalidConfig {
                config_id: self.config_id.clone(),
                message: message.to_string(),
            })
        };
        if self.config_id.is_empty()
            || self.config_id.contains(['/', '\\'])
            || self.config_id.contains("__")
        {
            return bad("config_id must be non-empty and contain no path separators or `__`");
        }
        if self.max_turns == 0 {
            return bad("max_turns must be > 0");
        }
        if self.per_call_timeout_s == 0 {
            return bad("per_call_timeout_s must be > 0");
        }
        if let Some(b) = self.context_budget_tokens {
            if b == 0 || b > self.backend.max_context_tokens {
                return bad("context_budget_tokens must be in 1..=backend.max_context_tokens");
            }
        }
        if let Err(e) = self.backend.validate() {
            return bad(&e.to_string());
        }
        Ok(())
    }

    /// Single-pass mode always gets exactly one turn.
    pub fn effective_max_turns(&self) -> u32 {
        match self.prompt_variant {
            PromptVariant::None => 1,
            _ => self.max_turns,
        }
    }

    pub fn context_budget(&self) -> u64 {
        self.context_budget_tokens
            .unwrap_or(self.backend.max_context_tokens)
    }

    pub fn limits(&self) -> Limits {
        Limits {
            timeout: Duration::from_secs(self.per_call_timeout_s),
            output_cap: self.output_cap_bytes,
        }
    }
}

pub(crate) fn check_pairing(variant: PromptVariant, catalog: Catalog) -> Result<(), AgentError> {
    let ok = matches!(
        (variant, catalog),
        (PromptVariant::Baseline, Catalog::Basic)
            | (
                PromptVariant::Structured,
                Catalog::Basic | Catalog::Expanded
            )
            | (PromptVariant::None, Catalog::Empty)
    );
    if ok {
        Ok(())
    } else {
        Err(AgentError::InvalidPairing { variant, catalog })
    }
}
