use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::PromptVariant;
use crate::llm::NativeToolCall;
use crate::toolbox::{tool_spec, ALL_TOOLS, SHELL_EXEC, TASK_COMPLETE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallOrigin {
    FencedBlock,
    Native,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub raw_text: String,
    pub args: BTreeMap<String, String>,
    pub origin: CallOrigin,
    /// Native call id; empty for fenced blocks.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub call_id: String,
}

/// A fenced code block as written by the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FencedBlock {
    /// Info string, trimmed; empty for a bare fence.
    pub info: String,
    pub body: String,
    /// The block sits right after an `action` label.
    pub after_action: bool,
}

/// Everything the loop needs from one assistant message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedReply {
    pub calls: Vec<ToolCall>,
    /// Body of the first `patch`/`diff` block.
    pub patch: Option<String>,
    /// `file:<path>` blocks, in order.
    pub files: Vec<(String, String)>,
    /// Text outside fenced blocks.
    pub thought: String,
}

fn action_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*(?:[-*]\s*)?\**action\**\s*:?\s*$").unwrap())
}

/// Splits `text` into fenced blocks and the prose between them.
/// Unterminated blocks are treated as prose.
pub fn fenced_blocks(text: &str) -> (Vec<FencedBlock>, String) {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut blocks = Vec::new();
    let mut prose: Vec<&str> = Vec::new();
    let mut i = 0;
    let mut last_prose_is_action = false;
    while i < lines.len() {
        let line = lines[i];
        if let Some((ticks, info, inline_action)) = opener(line) {
            if let Some(end) = (i + 1..lines.len()).find(|&j| closes(lines[j], ticks)) {
                let body = lines[i + 1..end].join("\n");
                blocks.push(FencedBlock {
                    info: info.to_string(),
                    body,
                    after_action: inline_action || last_prose_is_action,
                });
                if inline_action {
                    prose.push(line[..line.find('`').unwrap_or(0)].trim_end());
                }
                last_prose_is_action = false;
                i = end + 1;
                continue;
            }
        }
        prose.push(line);
        if !line.trim().is_empty() {
            last_prose_is_action = action_label().is_match(line);
        }
        i += 1;
    }
    (blocks, prose.join("\n").trim().to_string())
}

/// Recognises "```info" and "action: ```info" lines.
fn opener(line: &str) -> Option<(usize, &str, bool)> {
    let pos = line.find("```")?;
    let (before, rest) = line.split_at(pos);
    let inline_action = if before.trim().is_empty() {
        false
    } else if action_label().is_match(before) {
        true
    } else {
        return None;
    };
    let ticks = rest.bytes().take_while(|&b| b == b'`').count();
    let info = rest[ticks..].trim();
    if info.contains('`') {
        return None;
    }
    Some((ticks, info, inline_action))
}

fn closes(line: &str, ticks: usize) -> bool {
    let t = line.trim();
    t.len() >= ticks && t.bytes().all(|b| b == b'`')
}

enum BlockKind {
    Tool(&'static str),
    Patch,
    File(String),
    Other,
}

fn classify(info: &str) -> BlockKind {
    if let Some(path) = info.strip_prefix("file:") {
        return BlockKind::File(path.trim().to_string());
    }
    let word = info
        .split_whitespace()
        .next()
        .unwrap_or("")
        .to_ascii_lowercase();
    match word.as_str() {
        "shell" | "bash" | "sh" | "console" | SHELL_EXEC => BlockKind::Tool(SHELL_EXEC),
        "patch" | "diff" => BlockKind::Patch,
        w => match ALL_TOOLS.iter().find(|t| **t == w) {
            Some(t) => BlockKind::Tool(t),
            None => BlockKind::Other,
        },
    }
}

/// Turns a block body into named arguments for `tool`.
///
/// Shell bodies are the command and completion bodies the summary. Other
/// tools take a JSON object, `name: value` / `name=value` lines, or bare
/// text, which is assigned to the tool's first argument.
pub(crate) fn block_args(tool: &str, body: &str) -> BTreeMap<String, String> {
    let mut args = BTreeMap::new();
    match tool {
        SHELL_EXEC => {
            args.insert("command".into(), body.trim_end_matches('\n').to_string());
            return args;
        }
        TASK_COMPLETE => {
            args.insert("summary".into(), body.trim().to_string());
            return args;
        }
        _ => {}
    }
    let trimmed = body.trim();
    if trimmed.starts_with('{') {
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(trimmed) {
            return json_args(&map);
        }
    }
    let names: Vec<String> = tool_spec(tool)
        .map(|s| s.arg_schema.into_iter().map(|a| a.name).collect())
        .unwrap_or_default();
    let mut loose = Vec::new();
    for line in trimmed.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let labelled = line
            .split_once(':')
            .or_else(|| line.split_once('='))
            .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim()))
            .filter(|(k, _)| names.iter().any(|n| n == k));
        match labelled {
            Some((k, v)) => {
                let slot: &mut String = args.entry(k).or_default();
                if !slot.is_empty() {
                    slot.push(' ');
                }
                slot.push_str(v);
            }
            None => loose.push(line),
        }
    }
    if !loose.is_empty() {
        if let Some(first) = names.first() {
            let slot = args.entry(first.clone()).or_default();
            for l in loose {
                if !slot.is_empty() {
                    slot.push(' ');
                }
                slot.push_str(l);
            }
        }
    }
    args
}

fn json_args(map: &serde_json::Map<String, Value>) -> BTreeMap<String, String> {
    map.iter()
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Array(items) => items
                    .iter()
                    .map(|i| {
                        i.as_str()
                            .map(str::to_string)
                            .unwrap_or_else(|| i.to_string())
                    })
                    .collect::<Vec<_>>()
                    .join(" "),
                Value::Null => String::new(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect()
}

fn native_call(c: &NativeToolCall) -> ToolCall {
    let args = match serde_json::from_str::<Value>(&c.arguments) {
        Ok(Value::Object(map)) => json_args(&map),
        _ => BTreeMap::new(),
    };
    ToolCall {
        tool_name: c.name.clone(),
        raw_text: c.arguments.clone(),
        args,
        origin: CallOrigin::Native,
        call_id: c.id.clone(),
    }
}

/// Tool calls in an assistant message under the structured-prompt rules.
/// Native calls, when present, win and the text is not scanned.
pub fn parse_tool_calls(text: &str, native: &[NativeToolCall]) -> Vec<ToolCall> {
    parse_assistant(text, native, PromptVariant::Structured).calls
}

/// Full parse of one assistant message for `variant`.
///
/// Blocks whose info string names a known tool become calls (whether or not
/// the active catalog offers it; the loop answers those with an error). In
/// the baseline variant a bare block after an `action` label is a shell
/// call. `patch`/`diff` and `file:<path>` blocks are answer artifacts, not
/// calls. Any other block is part of the thought.
pub fn parse_assistant(
    text: &str,
    native: &[NativeToolCall],
    variant: PromptVariant,
) -> ParsedReply {
    let (blocks, thought) = fenced_blocks(text);
    let mut reply = ParsedReply {
        thought,
        ..Default::default()
    };
    if !native.is_empty() {
        reply.calls = native.iter().map(native_call).collect();
        return reply;
    }
    for b in blocks {
        let kind = if b.info.is_empty() && b.after_action && variant == PromptVariant::Baseline {
            BlockKind::Tool(SHELL_EXEC)
        } else {
            classify(&b.info)
        };
        match kind {
            BlockKind::Tool(name) => reply.calls.push(ToolCall {
                tool_name: name.to_string(),
                args: block_args(name, &b.body),
                raw_text: b.body,
                origin: CallOrigin::FencedBlock,
                call_id: String::new(),
            }),
            BlockKind::Patch => {
                if reply.patch.is_none() {
                    reply.patch = Some(b.body);
                }
            }
            BlockKind::File(path) => reply.files.push((path, b.body)),
            BlockKind::Other => {}
        }
    }
    reply
}
