use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use chrono::Utc;
use serde_json::json;

use super::files::{snapshot_workspace, track_modified_files, FileHashes};
use super::parse::parse_assistant;
use super::patch::{apply_patch, PatchReport, RejectedHunk};
use super::prompt::{render_system_prompt, render_user_prompt, GATE_REMINDER};
use super::trace::{write_trace, CrashReason, EventLog, RunStatus, RunTrace, Turn};
use super::{AgentConfig, PromptVariant, ToolCall};
use crate::corpus::TaskSpec;
use crate::llm::{estimate_history, open_backend, ChatBackend, ChatMessage, LlmError};
use crate::sandbox::check_relative_path;
use crate::toolbox::{
    task_complete, CommandRunner, ToolResult, Toolbox, IVERILOG_COMPILE, TASK_COMPLETE, USAGE_EXIT,
};

/// Consecutive turns without a tool call (or answer) before the run is
/// declared deadlocked.
pub const DEADLOCK_TURNS: u32 = 3;

/// Everything a run needs besides the task and config.
pub struct RunContext<'a> {
    pub run_id: &'a str,
    pub workspace: &'a Path,
    pub runner: Arc<dyn CommandRunner>,
    /// Directory for `<run_id>.trace.json` and `<run_id>.events.jsonl`.
    pub log_dir: Option<&'a Path>,
}

struct State {
    trace: RunTrace,
    history: Vec<ChatMessage>,
    compiled_ok: bool,
    silent_turns: u32,
    initial: FileHashes,
    events: EventLog,
}

enum TurnEnd {
    Continue,
    Terminal,
}

impl State {
    fn crash(&mut self, reason: CrashReason, detail: impl Into<String>) {
        self.trace.status = RunStatus::Crashed;
        self.trace.crash_reason = Some(reason);
        self.trace.crash_detail = Some(detail.into());
    }

    fn warn(&mut self, msg: String) {
        self.trace.warnings.push(msg);
    }

    fn log(&mut self, event: &str, payload: serde_json::Value) {
        if let Err(e) = self.events.record(event, payload) {
            self.trace
                .warnings
                .push(format!("event log write failed: {e}"));
            self.events = EventLog::disabled();
        }
    }
}

/// Opens the configured backend and runs the loop. Never fails: every
/// abnormal path is recorded as a crashed trace.
pub fn run_agent(task: &TaskSpec, config: &AgentConfig, ctx: &RunContext<'_>) -> RunTrace {
    match open_backend(&config.backend) {
        Ok(mut backend) => run_agent_with_backend(task, config, ctx, backend.as_mut()),
        Err(e) => {
            let mut state = new_state(task, config, ctx);
            state.log(
                "start",
                json!({ "task_id": task.id, "config_id": config.config_id }),
            );
            state.crash(CrashReason::BackendError, e.to_string());
            finish(state, ctx)
        }
    }
}

fn new_state(task: &TaskSpec, config: &AgentConfig, ctx: &RunContext<'_>) -> State {
    let now = Utc::now();
    let mut warnings = Vec::new();
    let events = match ctx.log_dir.map(|d| EventLog::open(d, ctx.run_id)) {
        Some(Ok(log)) => log,
        Some(Err(e)) => {
            warnings.push(format!("event log unavailable: {e}"));
            EventLog::disabled()
        }
        None => EventLog::disabled(),
    };
    State {
        trace: RunTrace {
            run_id: ctx.run_id.to_string(),
            task_id: task.id.clone(),
            config_id: config.config_id.clone(),
            prompt_variant: config.prompt_variant,
            catalog: config.catalog,
            turns: Vec::new(),
            status: RunStatus::MaxTurnsExceeded,
            crash_reason: None,
            crash_detail: None,
            final_summary: None,
            modified_files: BTreeSet::new(),
            deleted_files: BTreeSet::new(),
            warnings,
            started_at: now,
            ended_at: now,
            total_prompt_tokens: 0,
            total_completion_tokens: 0,
        },
        history: Vec::new(),
        compiled_ok: false,
        silent_turns: 0,
        initial: snapshot_workspace(ctx.workspace),
        events,
    }
}

pub fn run_agent_with_backend(
    task: &TaskSpec,
    config: &AgentConfig,
    ctx: &RunContext<'_>,
    backend: &mut dyn ChatBackend,
) -> RunTrace {
    let mut state = new_state(task, config, ctx);
    state.log(
        "start",
        json!({ "task_id": task.id, "config_id": config.config_id, "variant": config.prompt_variant, "catalog": config.catalog }),
    );
    if let Err(e) = config.validate() {
        state.crash(CrashReason::Internal, e.to_string());
        return finish(state, ctx);
    }
    let toolbox = Toolbox::new(ctx.runner.clone(), config.limits());
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
        drive(task, config, ctx, backend, &toolbox, &mut state)
    }));
    if let Err(p) = outcome {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        state.crash(CrashReason::Internal, format!("internal error: {msg}"));
    }
    finish(state, ctx)
}

fn drive(
    task: &TaskSpec,
    config: &AgentConfig,
    ctx: &RunContext<'_>,
    backend: &mut dyn ChatBackend,
    toolbox: &Toolbox,
    state: &mut State,
) {
    let system = match render_system_prompt(config.prompt_variant, config.catalog) {
        Ok(s) => s,
        Err(e) => return state.crash(CrashReason::Internal, e.to_string()),
    };
    state.history.push(ChatMessage::system(system));
    state.history.push(ChatMessage::user(render_user_prompt(
        task,
        config.prompt_variant,
    )));
    let specs = config.catalog.specs();
    let tools = (config.backend.native_tools && !specs.is_empty()).then_some(specs.as_slice());
    let budget = config.context_budget();

    for index in 0..config.effective_max_turns() {
        let estimate = estimate_history(&state.history);
        if estimate > budget {
            return state.crash(
                CrashReason::ContextOverflow,
                LlmError::ContextOverflow {
                    prompt_tokens: estimate,
                    limit: budget,
                }
                .to_string(),
            );
        }
        let completion = match backend.complete(&state.history, tools) {
            Ok(c) => c,
            Err(e @ LlmError::ContextOverflow { .. }) => {
                return state.crash(CrashReason::ContextOverflow, e.to_string())
            }
            Err(e) => return state.crash(CrashReason::BackendError, e.to_string()),
        };
        state.trace.total_prompt_tokens += completion.usage.prompt_tokens;
        state.trace.total_completion_tokens += completion.usage.completion_tokens;
        state.history.push(completion.message.clone());

        let mut turn = Turn {
            index,
            assistant: completion.message,
            calls: Vec::new(),
            results: Vec::new(),
            usage: completion.usage,
            patch: None,
            harness_messages: Vec::new(),
        };
        let end = match config.prompt_variant {
            PromptVariant::None => single_pass(ctx.workspace, &mut turn, state),
            _ => tool_turn(config, ctx.workspace, toolbox, &mut turn, state),
        };
        let modified = track_modified_files(&state.initial, &snapshot_workspace(ctx.workspace));
        state.log("turn", json!({ "turn": turn, "modified_files": modified }));
        state.trace.turns.push(turn);
        match end {
            TurnEnd::Terminal => {
                state.trace.status = RunStatus::Completed;
                return;
            }
            TurnEnd::Continue if state.silent_turns >= DEADLOCK_TURNS => {
                return state.crash(
                    CrashReason::ParseDeadlock,
                    format!(
                        "{DEADLOCK_TURNS} consecutive turns without a tool call or final answer"
                    ),
                );
            }
            TurnEnd::Continue => {}
        }
    }
    state.trace.status = RunStatus::MaxTurnsExceeded;
}

fn single_pass(ws: &Path, turn: &mut Turn, state: &mut State) -> TurnEnd {
    let reply = parse_assistant(
        &turn.assistant.content,
        &turn.assistant.tool_calls,
        PromptVariant::None,
    );
    let mut report = PatchReport::default();
    for (path, body) in &reply.files {
        if let Err(v) = check_relative_path(path) {
            report.rejects.push(RejectedHunk {
                file: path.clone(),
                hunk: 1,
                reason: format!("policy violation: {v}"),
            });
            continue;
        }
        let target = ws.join(path);
        let mut content = body.clone();
        if !content.ends_with('\n') {
            content.push('\n');
        }
        let written = target
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&target, content));
        match written {
            Ok(()) => {
                report.applied_files.insert(path.clone());
            }
            Err(e) => report.rejects.push(RejectedHunk {
                file: path.clone(),
                hunk: 1,
                reason: format!("write failed: {e}"),
            }),
        }
    }
    if let Some(p) = &reply.patch {
        merge_patch(ws, p, &mut report, state);
    }
    if reply.files.is_empty() && reply.patch.is_none() {
        state.warn("single-pass answer contained no file or patch blocks".into());
    }
    turn.patch = Some(report);
    state.trace.final_summary = Some(reply.thought).filter(|t| !t.is_empty());
    TurnEnd::Terminal
}

fn merge_patch(ws: &Path, patch: &str, report: &mut PatchReport, state: &mut State) {
    match apply_patch(ws, patch) {
        Ok(r) => {
            report.applied_files.extend(r.applied_files);
            report.rejects.extend(r.rejects);
        }
        Err(e) => {
            state.warn(format!("patch not applied: {e}"));
            report.rejects.push(RejectedHunk {
                file: String::new(),
                hunk: 0,
                reason: e.to_string(),
            });
        }
    }
}

fn tool_turn(
    config: &AgentConfig,
    ws: &Path,
    toolbox: &Toolbox,
    turn: &mut Turn,
    state: &mut State,
) -> TurnEnd {
    let reply = parse_assistant(
        &turn.assistant.content,
        &turn.assistant.tool_calls,
        config.prompt_variant,
    );
    turn.calls = reply.calls;
    let mut completed = false;

    for (k, call) in turn.calls.iter().enumerate() {
        if completed {
            if call.tool_name == TASK_COMPLETE {
                state.warn(format!(
                    "turn {}: duplicate task_complete ignored",
                    turn.index
                ));
            } else {
                state.warn(format!(
                    "turn {}: `{}` after task_complete not executed",
                    turn.index, call.tool_name
                ));
            }
            continue;
        }
        let result = execute_call(config, ws, toolbox, call, state, &mut completed);
        let call_id = if call.call_id.is_empty() {
            format!("call_{}_{}", turn.index, k)
        } else {
            call.call_id.clone()
        };
        if call.tool_name == TASK_COMPLETE && !completed && result.exit_code != USAGE_EXIT {
            turn.harness_messages.push(GATE_REMINDER.to_string());
        }
        state
            .history
            .push(ChatMessage::tool(call_id, result.observation()));
        turn.results.push(result);
    }

    if !completed && config.prompt_variant == PromptVariant::Baseline {
        if let Some(p) = &reply.patch {
            let mut report = PatchReport::default();
            merge_patch(ws, p, &mut report, state);
            turn.patch = Some(report);
            state.trace.final_summary = Some(reply.thought.clone()).filter(|t| !t.is_empty());
            completed = true;
        }
    }
    if completed {
        return TurnEnd::Terminal;
    }
    if turn.calls.is_empty() {
        state.silent_turns += 1;
        if state.silent_turns < DEADLOCK_TURNS {
            let nudge = nudge_text(config.prompt_variant);
            turn.harness_messages.push(nudge.clone());
            state.history.push(ChatMessage::user(nudge));
        }
    } else {
        state.silent_turns = 0;
    }
    TurnEnd::Continue
}

fn nudge_text(variant: PromptVariant) -> String {
    let finish = match variant {
        PromptVariant::Baseline => "or finish with a `patch` block",
        _ => "or call `task_complete` when you are done",
    };
    format!(
        "No tool call was found in your last message. Put each action in a fenced block whose info string is a tool name (for example ```shell_exec), {finish}."
    )
}

fn execute_call(
    config: &AgentConfig,
    ws: &Path,
    toolbox: &Toolbox,
    call: &ToolCall,
    state: &mut State,
    completed: &mut bool,
) -> ToolResult {
    if !config.catalog.contains(&call.tool_name) {
        return ToolResult::failure(
            &call.tool_name,
            USAGE_EXIT,
            format!(
                "unknown tool `{}`: not in the active catalog ({})",
                call.tool_name,
                config.catalog.tool_names().join(", ")
            ),
        );
    }
    if call.tool_name == TASK_COMPLETE {
        if config.prompt_variant == PromptVariant::Structured && !state.compiled_ok {
            return ToolResult::failure(TASK_COMPLETE, 1, GATE_REMINDER);
        }
        let marker = task_complete(call.args.get("summary").map(String::as_str).unwrap_or(""));
        if marker.empty_summary {
            state.warn("task_complete called without a summary".into());
        }
        state.trace.final_summary = Some(marker.summary).filter(|s| !s.is_empty());
        *completed = true;
        return ToolResult::ok(TASK_COMPLETE, "task_complete called.");
    }
    let result = toolbox.execute(ws, &call.tool_name, &call.args);
    if call.tool_name == IVERILOG_COMPILE && result.success() {
        state.compiled_ok = true;
    }
    result
}

fn finish(mut state: State, ctx: &RunContext<'_>) -> RunTrace {
    let last = snapshot_workspace(ctx.workspace);
    let changed = track_modified_files(&state.initial, &last);
    let (modified, deleted): (BTreeSet<String>, BTreeSet<String>) =
        changed.into_iter().partition(|p| last.contains_key(p));
    state.trace.modified_files = modified;
    state.trace.deleted_files = deleted;
    state.trace.ended_at = Utc::now();
    let summary = json!({
        "status": state.trace.status,
        "crash_reason": state.trace.crash_reason,
        "crash_detail": state.trace.crash_detail,
        "turns": state.trace.turns.len(),
        "modified_files": state.trace.modified_files,
        "prompt_tokens": state.trace.total_prompt_tokens,
        "completion_tokens": state.trace.total_completion_tokens,
    });
    state.log("end", summary);
    if let Some(dir) = ctx.log_dir {
        if let Err(e) = write_trace(dir, &state.trace) {
            state
                .trace
                .warnings
                .push(format!("trace write failed: {e}"));
        }
    }
    state.trace
}
