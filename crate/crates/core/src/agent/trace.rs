use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{PatchReport, PromptVariant, ToolCall};
use crate::llm::{ChatMessage, Usage};
use crate::toolbox::{Catalog, ToolResult, TASK_COMPLETE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Crashed,
    MaxTurnsExceeded,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::Crashed => "crashed",
            RunStatus::MaxTurnsExceeded => "max_turns_exceeded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashReason {
    ContextOverflow,
    BackendError,
    ParseDeadlock,
    Internal,
}

impl fmt::Display for CrashReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrashReason::ContextOverflow => "context_overflow",
            CrashReason::BackendError => "backend_error",
            CrashReason::ParseDeadlock => "parse_deadlock",
            CrashReason::Internal => "internal",
        })
    }
}

/// One thought/action/observation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub assistant: ChatMessage,
    pub calls: Vec<ToolCall>,
    /// One per call, in call order.
    pub results: Vec<ToolResult>,
    pub usage: Usage,
    /// Patch or inline-file answer applied at the end of this turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchReport>,
    /// Messages the harness injected after this turn (nudges, reminders).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub harness_messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run_id: String,
    pub task_id: String,
    pub config_id: String,
    pub prompt_variant: PromptVariant,
    pub catalog: Catalog,
    pub turns: Vec<Turn>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash_reason: Option<CrashReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash_detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_summary: Option<String>,
    /// Created or changed files that still exist at the end of the run.
    pub modified_files: BTreeSet<String>,
    /// Pre-existing files the run removed.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub deleted_files: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
}

impl RunTrace {
    /// Serialized form with wall-clock fields zeroed, for comparing runs.
    pub fn canonical_json(&self) -> String {
        let mut t = self.clone();
        t.started_at = DateTime::<Utc>::UNIX_EPOCH;
        t.ended_at = DateTime::<Utc>::UNIX_EPOCH;
        for turn in &mut t.turns {
            for r in &mut turn.results {
                r.duration_ms = 0;
            }
        }
        serde_json::to_string(&t).expect("trace serializes")
    }

    /// Names of the tools actually executed, in order.
    pub fn tool_sequence(&self) -> impl Iterator<Item = &ToolCall> {
        self.turns
            .iter()
            .flat_map(|t| t.calls.iter().take(t.results.len()))
    }
}

pub fn trace_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.trace.json"))
}

pub fn events_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.events.jsonl"))
}

/// Writes `<dir>/<run_id>.trace.json` atomically (write then rename).
pub fn write_trace(dir: &Path, trace: &RunTrace) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = trace_path(dir, &trace.run_id);
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_vec_pretty(trace).map_err(io::Error::other)?;
    fs::write(&tmp, body)?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn read_trace(path: &Path) -> io::Result<RunTrace> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Append-only per-run event log, flushed line by line so an interrupted
/// run still leaves evidence behind.
pub struct EventLog {
    file: Option<File>,
}

impl EventLog {
    pub fn disabled() -> Self {
        EventLog { file: None }
    }

    pub fn open(dir: &Path, run_id: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(events_path(dir, run_id))?;
        Ok(EventLog { file: Some(file) })
    }

    pub fn record(&mut self, event: &str, payload: serde_json::Value) -> io::Result<()> {
        let Some(f) = self.file.as_mut() else {
            return Ok(());
        };
        let line = json!({ "event": event, "at": Utc::now(), "data": payload });
        writeln!(f, "{line}")?;
        f.flush()
    }
}

fn quote_first_line(s: &str, max: usize) -> String {
    let first = s.lines().next().unwrap_or("");
    let multi = s.lines().nth(1).is_some();
    let mut q: String = first.chars().take(max).collect();
    if multi || first.chars().count() > max {
        q.push_str(" ...");
    }
    q
}

fn observation_preview(r: &ToolResult, max_lines: usize) -> Vec<String> {
    let text = if r.stdout.trim().is_empty() {
        &r.stderr
    } else {
        &r.stdout
    };
    let mut lines: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .take(max_lines)
        .map(str::to_string)
        .collect();
    if lines.is_empty() {
        lines.push(format!("(exit {})", r.exit_code));
    }
    lines
}

/// Human-readable replay: a header with the outcome, then per turn the
/// thought, each executed tool call with the head of its observation, and
/// finally the terminal event. An accepted `task_complete` is always the
/// last line of its turn, so a completed run ends with it.
pub fn render_replay(trace: &RunTrace) -> String {
    let mut out = format!(
        "run {} | task {} | config {} ({}, {})\n",
        trace.run_id, trace.task_id, trace.config_id, trace.prompt_variant, trace.catalog
    );
    out.push_str(&format!(
        "status: {} | turns: {} | modified: {}\n",
        trace.status,
        trace.turns.len(),
        trace
            .modified_files
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    ));
    if let Some(s) = &trace.final_summary {
        out.push_str(&format!("summary: {}\n", quote_first_line(s, 200)));
    }
    let mut completion_shown = false;
    for turn in &trace.turns {
        out.push_str(&format!("\n--- turn {} ---\n", turn.index));
        let (_, thought) = super::parse::fenced_blocks(&turn.assistant.content);
        if !thought.is_empty() {
            out.push_str(&format!("thought: {}\n", quote_first_line(&thought, 100)));
        }
        let mut completed_here = false;
        for (call, result) in turn.calls.iter().zip(&turn.results) {
            if call.tool_name == TASK_COMPLETE && result.success() {
                completed_here = true;
                continue;
            }
            let arg = match call.args.get("command") {
                Some(c) => format!("'{}'", quote_first_line(c, 80)),
                None => call
                    .args
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            };
            out.push_str(&format!("[TOOL] {}: {}\n", call.tool_name, arg));
            for (i, l) in observation_preview(result, 3).iter().enumerate() {
                let lead = if i == 0 { "  -> " } else { "     " };
                out.push_str(&format!("{lead}{l}\n"));
            }
        }
        for call in turn.calls.iter().skip(turn.results.len()) {
            out.push_str(&format!("[SKIPPED] {}\n", call.tool_name));
        }
        if let Some(p) = &turn.patch {
            let files: Vec<&str> = p.applied_files.iter().map(String::as_str).collect();
            out.push_str(&format!(
                "[PATCH] applied: {}; rejected hunks: {}\n",
                files.join(", "),
                p.rejects.len()
            ));
        }
        for m in &turn.harness_messages {
            out.push_str(&format!("[HARNESS] {}\n", quote_first_line(m, 100)));
        }
        if completed_here {
            out.push_str("[TOOL] task_complete called.\n");
            completion_shown = true;
        }
    }
    match trace.status {
        RunStatus::Completed if completion_shown => {}
        RunStatus::Completed => out.push_str("\n[DONE] final answer submitted.\n"),
        RunStatus::Crashed => out.push_str(&format!(
            "\n[CRASH] {}: {}\n",
            trace
                .crash_reason
                .map(|r| r.to_string())
                .unwrap_or_else(|| "unknown".into()),
            trace.crash_detail.as_deref().unwrap_or("")
        )),
        RunStatus::MaxTurnsExceeded => out.push_str("\n[STOP] turn budget exhausted.\n"),
    }
    out
}
