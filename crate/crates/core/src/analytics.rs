//! Aggregates over finished runs: completion/crash rates, tool usage,
//! correct-vs-wrong usage deltas, difficulty breakdowns and the
//! completed→passed conditional rate, plus JSON and markdown rendering.
//!
//! Displayed percentages are rounded half away from zero to one decimal,
//! computed from exact counts so ties are never at the mercy of binary
//! floating point.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{RunStatus, RunTrace};
use crate::corpus::{Difficulty, Subset, TaskSpec};
use crate::evaluation::{score_rows, FailureMode, Outcome, ScoreRow};
use crate::sandbox::command_names;
use crate::toolbox::SHELL_EXEC;

/// Row name for calls to tools outside the run's catalog.
pub const UNKNOWN_TOOL: &str = "unknown_tool";
/// Row name grouping plain file-manipulation commands.
pub const FS_OPS: &str = "fs_ops";

const FS_OP_COMMANDS: &[&str] = &["cp", "mv", "rm", "rmdir", "mkdir", "touch", "chmod", "ln"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("no runs to aggregate")]
    Empty,
    #[error("config `{0}` has no completed runs")]
    NoCompletedRuns(String),
}

// ---------------------------------------------------------------------------
// Rounding

/// `100 * num / den` rounded half away from zero to one decimal, exactly.
pub fn pct1(num: i64, den: u64) -> f64 {
    assert!(den > 0, "percentage of an empty population");
    let den = den as i128;
    let mag = (num.unsigned_abs() as i128) * 1000;
    let tenths = (2 * mag + den) / (2 * den);
    let signed = if num < 0 { -tenths } else { tenths };
    signed as f64 / 10.0
}

/// `num / den` rounded half away from zero to two decimals, exactly.
pub fn ratio2(num: u64, den: u64) -> f64 {
    assert!(den > 0, "mean over an empty population");
    let (num, den) = (num as u128, den as u128);
    ((200 * num + den) / (2 * den)) as f64 / 100.0
}

/// Rounds half away from zero to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Percentage-point gap between two usage rates given as fractions.
pub fn delta_pp(rate_correct: f64, rate_wrong: f64) -> f64 {
    round1(100.0 * (rate_correct - rate_wrong))
}

// ---------------------------------------------------------------------------
// Tool normalization

/// Maps a dedicated tool or a shell program onto the underlying binary
/// name used for reporting.
pub fn normalize_tool(name: &str) -> String {
    match name {
        "iverilog_compile" => "iverilog".into(),
        "vvp_simulate" => "vvp".into(),
        "verilator_lint" => "verilator".into(),
        "yosys_lint" | "yosys_synth" => "yosys".into(),
        n if FS_OP_COMMANDS.contains(&n) => FS_OPS.into(),
        n => n.into(),
    }
}

/// Per-run call count for one reporting row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolTally {
    pub calls: u64,
    /// Names as they appeared in the trace (tool names, or `shell_exec`
    /// for programs launched through the shell).
    pub raw_names: BTreeSet<String>,
}

/// Counts executed calls in one trace. A `shell_exec` call counts once
/// under `shell_exec` and once under every program its command line runs.
pub fn tool_tallies(trace: &RunTrace) -> BTreeMap<String, ToolTally> {
    let mut out: BTreeMap<String, ToolTally> = BTreeMap::new();
    let mut bump = |row: String, raw: &str| {
        let t = out.entry(row).or_default();
        t.calls += 1;
        t.raw_names.insert(raw.to_string());
    };
    for call in trace.tool_sequence() {
        if !trace.catalog.contains(&call.tool_name) {
            bump(UNKNOWN_TOOL.into(), &call.tool_name);
            continue;
        }
        bump(normalize_tool(&call.tool_name), &call.tool_name);
        if call.tool_name == SHELL_EXEC {
            let command = call.args.get("command").map(String::as_str).unwrap_or("");
            for program in command_names(command) {
                bump(normalize_tool(&program), SHELL_EXEC);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Row types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRow {
    pub config_id: String,
    pub n_runs: u64,
    pub n_completed: u64,
    /// Crashed plus turn-budget exhausted.
    pub n_crashed: u64,
    pub completed_pct: f64,
    /// Complement of `completed_pct`, so the pair always sums to 100.
    pub crashed_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolUsageStats {
    pub tool: String,
    pub raw_names: Vec<String>,
    pub n_runs: u64,
    pub runs_using: u64,
    pub total_calls: u64,
    /// Fraction of runs with at least one call.
    pub usage_rate: f64,
    /// Mean calls per run, zero-call runs included.
    pub avg_calls_per_run: f64,
}

impl ToolUsageStats {
    pub fn usage_pct(&self) -> f64 {
        pct1(self.runs_using as i64, self.n_runs)
    }

    pub fn avg_display(&self) -> f64 {
        ratio2(self.total_calls, self.n_runs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub tool: String,
    pub raw_names: Vec<String>,
    pub correct_using: u64,
    pub n_correct: u64,
    pub wrong_using: u64,
    pub n_wrong: u64,
    pub rate_correct: f64,
    pub rate_wrong: f64,
    /// `100 * (rate_correct - rate_wrong)`, rounded to one decimal.
    pub delta_pp: f64,
}

/// Either the delta rows, or the reason they cannot be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeltaTable {
    Defined { rows: Vec<DeltaRow> },
    Undefined { n_correct: u64, n_wrong: u64 },
}

impl DeltaTable {
    pub fn rows(&self) -> &[DeltaRow] {
        match self {
            DeltaTable::Defined { rows } => rows,
            DeltaTable::Undefined { .. } => &[],
        }
    }

    pub fn get(&self, tool: &str) -> Option<&DeltaRow> {
        self.rows().iter().find(|r| r.tool == tool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub difficulty: Difficulty,
    pub n_runs: u64,
    pub n_passed: u64,
    /// Runs judged `agent_crash` or `no_log`.
    pub n_crashed: u64,
    pub pass_rate: f64,
    pub crash_rate: f64,
}

impl DifficultyRow {
    pub fn pass_pct(&self) -> f64 {
        pct1(self.n_passed as i64, self.n_runs)
    }

    pub fn crash_pct(&self) -> f64 {
        pct1(self.n_crashed as i64, self.n_runs)
    }
}

// ---------------------------------------------------------------------------
// Operations

fn group_traces(traces: &[RunTrace]) -> BTreeMap<&str, Vec<&RunTrace>> {
    let mut groups: BTreeMap<&str, Vec<&RunTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.config_id.as_str()).or_default().push(t);
    }
    groups
}

/// One row per config found in `traces`.
pub fn completion_crash_table(traces: &[RunTrace]) -> Result<Vec<CompletionRow>, AnalyticsError> {
    if traces.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    Ok(group_traces(traces)
        .into_iter()
        .map(|(config_id, group)| completion_row(config_id, &group))
        .collect())
}

fn completion_row(config_id: &str, group: &[&RunTrace]) -> CompletionRow {
    let n_runs = group.len() as u64;
    let n_completed = group
        .iter()
        .filter(|t| t.status == RunStatus::Completed)
        .count() as u64;
    let completed_pct = pct1(n_completed as i64, n_runs);
    CompletionRow {
        config_id: config_id.to_string(),
        n_runs,
        n_completed,
        n_crashed: n_runs - n_completed,
        completed_pct,
        crashed_pct: round1(100.0 - completed_pct),
    }
}

/// Usage over `traces`, one row per tool in the traces' catalogs or seen
/// in any call. Rows are sorted by name.
pub fn tool_usage_stats(traces: &[RunTrace]) -> Vec<ToolUsageStats> {
    let tallies: Vec<_> = traces.iter().map(tool_tallies).collect();
    let mut rows: BTreeMap<String, (u64, u64, BTreeSet<String>)> = BTreeMap::new();
    for t in traces {
        for name in t.catalog.tool_names() {
            rows.entry(normalize_tool(name))
                .or_default()
                .2
                .insert(name.to_string());
        }
    }
    for tally in &tallies {
        for (tool, t) in tally {
            let row = rows.entry(tool.clone()).or_default();
            row.0 += 1;
            row.1 += t.calls;
            row.2.extend(t.raw_names.iter().cloned());
        }
    }
    let n_runs = traces.len() as u64;
    rows.into_iter()
        .map(|(tool, (runs_using, total_calls, raw))| ToolUsageStats {
            tool,
            raw_names: raw.into_iter().collect(),
            n_runs,
            runs_using,
            total_calls,
            usage_rate: if n_runs == 0 {
                0.0
            } else {
                runs_using as f64 / n_runs as f64
            },
            avg_calls_per_run: if n_runs == 0 {
                0.0
            } else {
                total_calls as f64 / n_runs as f64
            },
        })
        .collect()
}

/// Usage-rate gap between passed and failed runs. Traces without an
/// outcome are ignored. Rows are sorted by `delta_pp` descending, then by
/// tool name.
pub fn tool_delta(traces: &[RunTrace], outcomes: &[Outcome]) -> DeltaTable {
    let passed: HashMap<&str, bool> = outcomes
        .iter()
        .map(|o| (o.run_id.as_str(), o.passed))
        .collect();
    let mut n_correct = 0u64;
    let mut n_wrong = 0u64;
    // tool -> (correct_using, wrong_using, raw names)
    let mut rows: BTreeMap<String, (u64, u64, BTreeSet<String>)> = BTreeMap::new();
    for trace in traces {
        let Some(&ok) = passed.get(trace.run_id.as_str()) else {
            continue;
        };
        if ok {
            n_correct += 1;
        } else {
            n_wrong += 1;
        }
        for (tool, t) in tool_tallies(trace) {
            let row = rows.entry(tool).or_default();
            if ok {
                row.0 += 1;
            } else {
                row.1 += 1;
            }
            row.2.extend(t.raw_names);
        }
    }
    if n_correct == 0 || n_wrong == 0 {
        return DeltaTable::Undefined { n_correct, n_wrong };
    }
    let mut out: Vec<DeltaRow> = rows
        .into_iter()
        .map(|(tool, (cu, wu, raw))| {
            // 100·(cu/nc − wu/nw) = 100·(cu·nw − wu·nc) / (nc·nw)
            let num = (cu * n_wrong) as i64 - (wu * n_correct) as i64;
            DeltaRow {
                tool,
                raw_names: raw.into_iter().collect(),
                correct_using: cu,
                n_correct,
                wrong_using: wu,
                n_wrong,
                rate_correct: cu as f64 / n_correct as f64,
                rate_wrong: wu as f64 / n_wrong as f64,
                delta_pp: pct1(num, n_correct * n_wrong),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.delta_pp
            .total_cmp(&a.delta_pp)
            .then_with(|| a.tool.cmp(&b.tool))
    });
    DeltaTable::Defined { rows: out }
}

/// Pass and crash rates per difficulty over the given outcomes. Outcomes
/// for tasks not in `tasks` are ignored; difficulties without runs are
/// omitted.
pub fn difficulty_breakdown(tasks: &[TaskSpec], outcomes: &[Outcome]) -> Vec<DifficultyRow> {
    let level: HashMap<&str, Difficulty> = tasks
        .iter()
        .map(|t| (t.id.as_str(), t.difficulty))
        .collect();
    let mut counts: BTreeMap<Difficulty, (u64, u64, u64)> = BTreeMap::new();
    for o in outcomes {
        let Some(d) = level.get(o.task_id.as_str()) else {
            continue;
        };
        let c = counts.entry(*d).or_default();
        c.0 += 1;
        c.1 += o.passed as u64;
        c.2 += matches!(o.failure_mode, FailureMode::AgentCrash | FailureMode::NoLog) as u64;
    }
    counts
        .into_iter()
        .map(|(difficulty, (n, p, c))| DifficultyRow {
            difficulty,
            n_runs: n,
            n_passed: p,
            n_crashed: c,
            pass_rate: p as f64 / n as f64,
            crash_rate: c as f64 / n as f64,
        })
        .collect()
}

/// Among runs that finished with `completed`, the fraction judged passed.
/// Expects traces of a single config.
pub fn finish_to_prob_pass(
    traces: &[RunTrace],
    outcomes: &[Outcome],
) -> Result<f64, AnalyticsError> {
    let passed: HashMap<&str, bool> = outcomes
        .iter()
        .map(|o| (o.run_id.as_str(), o.passed))
        .collect();
    let completed: Vec<&RunTrace> = traces
        .iter()
        .filter(|t| t.status == RunStatus::Completed)
        .collect();
    if completed.is_empty() {
        let id = traces
            .first()
            .map(|t| t.config_id.clone())
            .unwrap_or_default();
        return Err(AnalyticsError::NoCompletedRuns(id));
    }
    let n_pass = completed
        .iter()
        .filter(|t| passed.get(t.run_id.as_str()).copied().unwrap_or(false))
        .count();
    Ok(n_pass as f64 / completed.len() as f64)
}

// ---------------------------------------------------------------------------
// Report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub corpus_id: String,
    pub config_ids: Vec<String>,
    pub generated_at: DateTime<Utc>,
    /// Number of judged runs.
    pub n_runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSection {
    pub config_id: String,
    pub n_runs: u64,
    /// Absent when the config has no traces at all.
    pub completion: Option<CompletionRow>,
    pub tool_usage: Vec<ToolUsageStats>,
    pub tool_delta: DeltaTable,
    pub difficulty: Vec<DifficultyRow>,
    /// Absent when no run completed.
    pub finish_to_prob_pass: Option<f64>,
    /// Judged runs per failure mode (`none` = passed).
    pub failure_modes: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsReport {
    pub metadata: ReportMetadata,
    pub configs: Vec<ConfigSection>,
    pub score_rows: Vec<ScoreRow>,
}

impl AnalyticsReport {
    pub fn config(&self, id: &str) -> Option<&ConfigSection> {
        self.configs.iter().find(|c| c.config_id == id)
    }
}

/// Builds every aggregate, per config. Configs come from both traces and
/// outcomes, so runs that never left a trace still count.
pub fn build_report(
    corpus_id: &str,
    tasks: &[TaskSpec],
    traces: &[RunTrace],
    outcomes: &[Outcome],
    generated_at: DateTime<Utc>,
) -> Result<AnalyticsReport, AnalyticsError> {
    if traces.is_empty() && outcomes.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let by_config = group_traces(traces);
    let mut outcome_groups: BTreeMap<&str, Vec<Outcome>> = BTreeMap::new();
    for o in outcomes {
        outcome_groups
            .entry(o.config_id.as_str())
            .or_default()
            .push(o.clone());
    }
    let config_ids: BTreeSet<&str> = by_config
        .keys()
        .chain(outcome_groups.keys())
        .copied()
        .collect();

    let mut configs = Vec::new();
    for id in &config_ids {
        let group: Vec<RunTrace> = by_config
            .get(id)
            .map(|g| g.iter().map(|t| (*t).clone()).collect())
            .unwrap_or_default();
        let outs = outcome_groups.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let mut failure_modes: BTreeMap<String, u64> = FailureMode::ALL
            .iter()
            .map(|m| (m.to_string(), 0))
            .collect();
        for o in outs {
            *failure_modes.entry(o.failure_mode.to_string()).or_default() += 1;
        }
        let refs: Vec<&RunTrace> = group.iter().collect();
        configs.push(ConfigSection {
            config_id: id.to_string(),
            n_runs: outs.len() as u64,
            completion: (!refs.is_empty()).then(|| completion_row(id, &refs)),
            tool_usage: tool_usage_stats(&group),
            tool_delta: tool_delta(&group, outs),
            difficulty: difficulty_breakdown(tasks, outs),
            finish_to_prob_pass: finish_to_prob_pass(&group, outs).ok(),
            failure_modes,
        });
    }
    let subsets: HashMap<&str, Subset> = tasks.iter().map(|t| (t.id.as_str(), t.subset)).collect();
    Ok(AnalyticsReport {
        metadata: ReportMetadata {
            corpus_id: corpus_id.to_string(),
            config_ids: config_ids.iter().map(|s| s.to_string()).collect(),
            generated_at,
            n_runs: outcomes.len() as u64,
        },
        configs,
        score_rows: score_rows(outcomes, &subsets),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn render_report(report: &AnalyticsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::Markdown => render_markdown(report),
    }
}

pub const TITLE_COMPLETION: &str = "Agent completion and crash rate";
pub const TITLE_DELTA: &str = "Tool usage rate delta (correct% − wrong%)";
pub const TITLE_DIFFICULTY: &str = "Pass rate and crash rate by difficulty";
pub const TITLE_USAGE: &str = "Tool usage rates and average calls per run";

fn fmt_pct(x: f64) -> String {
    format!("{x:.1}%")
}

fn fmt_pp(x: f64) -> String {
    if x > 0.0 {
        format!("+{x:.1} pp")
    } else if x < 0.0 {
        format!("−{:.1} pp", -x)
    } else {
        "0.0 pp".into()
    }
}

fn table_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

fn table_head(cells: &[&str], right_from: usize) -> String {
    let mut s = table_row(&cells.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    let rule: Vec<String> = (0..cells.len())
        .map(|i| {
            if i >= right_from {
                "---:".to_string()
            } else {
                "---".to_string()
            }
        })
        .collect();
    s.push_str(&table_row(&rule));
    s
}

fn render_markdown(report: &AnalyticsReport) -> String {
    let m = &report.metadata;
    let mut out = String::from("# Analytics report\n\n");
    let _ = writeln!(
        out,
        "- corpus: `{}`\n- configs: {}\n- judged runs: {}\n- generated: {}\n",
        m.corpus_id,
        m.config_ids
            .iter()
            .map(|c| format!("`{c}`"))
            .collect::<Vec<_>>()
            .join(", "),
        m.n_runs,
        m.generated_at
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    );

    out.push_str("## Pass@1\n\n");
    out.push_str(&table_head(
        &["Config", "Subset", "Runs", "Passed", "pass@1"],
        2,
    ));
    for r in &report.score_rows {
        out.push_str(&table_row(&[
            r.config_id.clone(),
            r.subset.to_string(),
            r.n_runs.to_string(),
            r.n_passed.to_string(),
            fmt_pct(pct1(r.n_passed as i64, r.n_runs as u64)),
        ]));
    }

    let _ = writeln!(out, "\n## {TITLE_COMPLETION}\n");
    out.push_str(&table_head(&["Config", "Runs", "Completed", "Crashed"], 1));
    for c in &report.configs {
        let Some(r) = &c.completion else { continue };
        out.push_str(&table_row(&[
            c.config_id.clone(),
            r.n_runs.to_string(),
            fmt_pct(r.completed_pct),
            fmt_pct(r.crashed_pct),
        ]));
    }

    out.push_str("\n## Failure modes\n\n");
    let mut head = vec!["Config"];
    let names: Vec<String> = FailureMode::ALL.iter().map(|m| m.to_string()).collect();
    head.extend(names.iter().map(String::as_str));
    head.push("Total");
    out.push_str(&table_head(&head, 1));
    for c in &report.configs {
        let mut cells = vec![c.config_id.clone()];
        cells.extend(
            names
                .iter()
                .map(|n| c.failure_modes.get(n).copied().unwrap_or(0).to_string()),
        );
        cells.push(c.n_runs.to_string());
        out.push_str(&table_row(&cells));
    }

    render_delta(&mut out, report);
    render_difficulty(&mut out, report);
    render_usage(&mut out, report);

    out.push_str("\n## finish_to_prob_pass\n\n");
    out.push_str(&table_head(&["Config", "finish_to_prob_pass"], 1));
    for c in &report.configs {
        let v = c
            .finish_to_prob_pass
            .map(|p| format!("{p:.3}"))
            .unwrap_or_else(|| "-- (no completed runs)".into());
        out.push_str(&table_row(&[c.config_id.clone(), v]));
    }
    out
}

fn render_delta(out: &mut String, report: &AnalyticsReport) {
    let _ = writeln!(out, "\n## {TITLE_DELTA}\n");
    let defined: Vec<&ConfigSection> = report
        .configs
        .iter()
        .filter(|c| matches!(c.tool_delta, DeltaTable::Defined { .. }))
        .collect();
    let mut tools: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &defined {
        for r in c.tool_delta.rows() {
            *tools.entry(r.tool.as_str()).or_default() += r.delta_pp;
        }
    }
    let mut order: Vec<(&str, f64)> = tools.into_iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if !defined.is_empty() {
        let mut head = vec!["Tool".to_string(), "Signal".to_string()];
        head.extend(defined.iter().map(|c| format!("{} Δ", c.config_id)));
        let head_refs: Vec<&str> = head.iter().map(String::as_str).collect();
        out.push_str(&table_head(&head_refs, 2));
        for (tool, sum) in &order {
            let signal = if *sum > 0.0 {
                "Positive"
            } else if *sum < 0.0 {
                "Negative"
            } else {
                "Neutral"
            };
            let mut cells = vec![format!("`{tool}`"), signal.to_string()];
            cells.extend(defined.iter().map(|c| {
                c.tool_delta
                    .get(tool)
                    .map(|r| fmt_pp(r.delta_pp))
                    .unwrap_or("--".into())
            }));
            out.push_str(&table_row(&cells));
        }
    }
    for c in &report.configs {
        if let DeltaTable::Undefined { n_correct, n_wrong } = c.tool_delta {
            let _ = writeln!(
                out,
                "\n> undefined delta for `{}`: needs both passed and failed runs (passed: {n_correct}, failed: {n_wrong}).",
                c.config_id
            );
        }
    }
}

fn render_difficulty(out: &mut String, report: &AnalyticsReport) {
    let _ = writeln!(out, "\n## {TITLE_DIFFICULTY}\n");
    let levels: Vec<Difficulty> = Difficulty::ALL
        .into_iter()
        .filter(|d| {
            report
                .configs
                .iter()
                .any(|c| c.difficulty.iter().any(|r| r.difficulty == *d))
        })
        .collect();
    let mut head = vec!["Config".to_string()];
    for d in &levels {
        head.push(format!("{d} Pass%"));
        head.push(format!("{d} Crash%"));
    }
    let head_refs: Vec<&str> = head.iter().map(String::as_str).collect();
    out.push_str(&table_head(&head_refs, 1));
    for c in &report.configs {
        let mut cells = vec![c.config_id.clone()];
        for d in &levels {
            match c.difficulty.iter().find(|r| r.difficulty == *d) {
                Some(r) => {
                    cells.push(fmt_pct(r.pass_pct()));
                    cells.push(fmt_pct(r.crash_pct()));
                }
                None => cells.extend(["--".to_string(), "--".to_string()]),
            }
        }
        out.push_str(&table_row(&cells));
    }
}

fn render_usage(out: &mut String, report: &AnalyticsReport) {
    let _ = writeln!(out, "\n## {TITLE_USAGE}\n");
    let tools: BTreeSet<&str> = report
        .configs
        .iter()
        .flat_map(|c| c.tool_usage.iter().map(|u| u.tool.as_str()))
        .collect();
    let mut head = vec!["Tool".to_string()];
    head.extend(report.configs.iter().map(|c| c.config_id.clone()));
    let head_refs: Vec<&str> = head.iter().map(String::as_str).collect();
    out.push_str(&table_head(&head_refs, 1));
    for tool in tools {
        let find = |c: &ConfigSection| c.tool_usage.iter().find(|u| u.tool == tool).cloned();
        let mut usage = vec![format!("`{tool}` usage%")];
        let mut avg = vec![format!("`{tool}` avg/run")];
        for c in &report.configs {
            match find(c) {
                Some(u) if u.n_runs > 0 => {
                    usage.push(fmt_pct(u.usage_pct()));
                    avg.push(format!("{:.2}", u.avg_display()));
                }
                _ => {
                    usage.push("--".into());
                    avg.push("--".into());
                }
            }
        }
        out.push_str(&table_row(&usage));
        out.push_str(&table_row(&avg));
    }
}
