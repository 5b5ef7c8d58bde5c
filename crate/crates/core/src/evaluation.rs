//! Judging finished runs and the pass@1 summary.
//!
//! Every run lands in exactly one failure mode, checked in this order:
//! missing trace (`no_log`), crashed or out-of-turns trace (`agent_crash`),
//! judge infrastructure failure (`harness_fail`), wrong answer (`unknown`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::agent::{read_trace, RunStatus, RunTrace};
use crate::corpus::{HarnessKind, Subset, TaskSpec};
use crate::pool::parallel_map;
use crate::toolbox::{
    CommandRunner, Limits, ToolResult, Toolbox, HARNESS_DIR, TIMEOUT_EXIT, UNAVAILABLE_EXIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    None,
    Unknown,
    AgentCrash,
    NoLog,
    HarnessFail,
}

impl FailureMode {
    pub const ALL: [FailureMode; 5] = [
        FailureMode::None,
        FailureMode::Unknown,
        FailureMode::AgentCrash,
        FailureMode::NoLog,
        FailureMode::HarnessFail,
    ];
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureMode::None => "none",
            FailureMode::Unknown => "unknown",
            FailureMode::AgentCrash => "agent_crash",
            FailureMode::NoLog => "no_log",
            FailureMode::HarnessFail => "harness_fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub run_id: String,
    pub task_id: String,
    pub config_id: String,
    pub passed: bool,
    pub failure_mode: FailureMode,
    pub detail: String,
}

impl Outcome {
    fn new(run: &RunRef<'_>, mode: FailureMode, detail: impl Into<String>) -> Self {
        Outcome {
            run_id: run.run_id.to_string(),
            task_id: run.task_id.to_string(),
            config_id: run.config_id.to_string(),
            passed: mode == FailureMode::None,
            failure_mode: mode,
            detail: detail.into(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.passed == (self.failure_mode == FailureMode::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub config_id: String,
    pub subset: Subset,
    pub n_runs: usize,
    pub n_passed: usize,
    pub pass_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("pass@1 of an empty outcome list is undefined")]
    Empty,
}

/// Identity of a scheduled run.
#[derive(Debug, Clone, Copy)]
pub struct RunRef<'a> {
    pub run_id: &'a str,
    pub task_id: &'a str,
    pub config_id: &'a str,
}

/// Judge-side tool access. Output is never capped here: the pass token
/// may sit anywhere in a long transcript.
#[derive(Clone)]
pub struct Judge {
    toolbox: Toolbox,
}

pub const JUDGE_BUILD: &str = "judge.out";

impl Judge {
    pub fn new(runner: Arc<dyn CommandRunner>, timeout: Duration) -> Self {
        Judge {
            toolbox: Toolbox::new(
                runner,
                Limits {
                    timeout,
                    output_cap: None,
                },
            ),
        }
    }

    /// Judges one run. `trace` is `Err(reason)` when the trace file is
    /// missing or unreadable. Never touches `workspace`; all work happens in
    /// a scratch copy.
    pub fn judge_run(
        &self,
        task: &TaskSpec,
        run: RunRef<'_>,
        trace: Result<&RunTrace, String>,
        workspace: Option<&Path>,
    ) -> Outcome {
        let trace = match trace {
            Ok(t) => t,
            Err(why) => return Outcome::new(&run, FailureMode::NoLog, why),
        };
        match trace.status {
            RunStatus::Completed => {}
            RunStatus::Crashed => {
                let reason = trace
                    .crash_reason
                    .map(|r| r.to_string())
                    .unwrap_or_else(|| "unspecified".into());
                return Outcome::new(
                    &run,
                    FailureMode::AgentCrash,
                    format!("run crashed: {reason}"),
                );
            }
            RunStatus::MaxTurnsExceeded => {
                return Outcome::new(&run, FailureMode::AgentCrash, "turn budget exhausted");
            }
        }
        let Some(ws) = workspace.filter(|w| w.is_dir()) else {
            return Outcome::new(&run, FailureMode::HarnessFail, "workspace missing");
        };
        let scratch = match tempfile::Builder::new().prefix("judge-").tempdir() {
            Ok(d) => d,
            Err(e) => {
                return Outcome::new(&run, FailureMode::HarnessFail, format!("scratch dir: {e}"))
            }
        };
        if let Err(e) = copy_tree(ws, scratch.path()) {
            return Outcome::new(
                &run,
                FailureMode::HarnessFail,
                format!("workspace copy failed: {e}"),
            );
        }
        let (mode, detail) = match task.harness.kind {
            HarnessKind::Testbench => self.run_testbench(task, scratch.path()),
            HarnessKind::GoldenCompare => golden_compare(task, scratch.path()),
        };
        Outcome::new(&run, mode, detail)
    }

    fn run_testbench(&self, task: &TaskSpec, dir: &Path) -> (FailureMode, String) {
        let h = &task.harness;
        // The agent may have edited the testbench; judge against the original.
        for tb in &h.tb_files {
            match task.context_files.get(tb) {
                Some(content) => {
                    let p = dir.join(tb);
                    let restored = p
                        .parent()
                        .map_or(Ok(()), fs::create_dir_all)
                        .and_then(|_| fs::write(&p, content));
                    if let Err(e) = restored {
                        return (
                            FailureMode::HarnessFail,
                            format!("cannot restore {tb}: {e}"),
                        );
                    }
                }
                None if dir.join(tb).is_file() => {}
                None => return (FailureMode::HarnessFail, format!("testbench {tb} missing")),
            }
        }
        if let Some(missing) = h.target_files.iter().find(|t| !dir.join(t).is_file()) {
            return (
                FailureMode::Unknown,
                format!("target file {missing} not produced"),
            );
        }
        let files: Vec<String> = h.target_files.iter().chain(&h.tb_files).cloned().collect();
        let compiled = self.toolbox.iverilog_compile(dir, &files, JUDGE_BUILD);
        if let Some(infra) = infrastructure_failure(&compiled) {
            return (FailureMode::HarnessFail, infra);
        }
        if !compiled.success() {
            if !h.golden_files.is_empty() && !self.golden_compiles(task, dir) {
                return (
                    FailureMode::HarnessFail,
                    "testbench does not compile against the golden solution".into(),
                );
            }
            return (
                FailureMode::Unknown,
                format!("compile failed: {}", first_line(&compiled.stderr)),
            );
        }
        let sim = self.toolbox.vvp_simulate(dir, JUDGE_BUILD);
        if let Some(infra) = infrastructure_failure(&sim) {
            return (FailureMode::HarnessFail, infra);
        }
        if sim.timed_out {
            return (FailureMode::Unknown, "simulation timed out".into());
        }
        if sim.exit_code == 0 && sim.stdout.contains(&h.pass_token) {
            (
                FailureMode::None,
                format!("pass token `{}` found", h.pass_token),
            )
        } else {
            (
                FailureMode::Unknown,
                format!(
                    "pass token `{}` absent (exit {})",
                    h.pass_token, sim.exit_code
                ),
            )
        }
    }

    /// Compiles the golden solution with the testbench in a separate copy.
    fn golden_compiles(&self, task: &TaskSpec, dir: &Path) -> bool {
        let Ok(alt) = tempfile::Builder::new().prefix("judge-golden-").tempdir() else {
            return false;
        };
        if copy_tree(dir, alt.path()).is_err() {
            return false;
        }
        for (p, c) in &task.harness.golden_files {
            let path = alt.path().join(p);
            if path
                .parent()
                .map_or(Ok(()), fs::create_dir_all)
                .and_then(|_| fs::write(&path, c))
                .is_err()
            {
                return false;
            }
        }
        let files: Vec<String> = task
            .harness
            .target_files
            .iter()
            .chain(&task.harness.tb_files)
            .cloned()
            .collect();
        self.toolbox
            .iverilog_compile(alt.path(), &files, JUDGE_BUILD)
            .success()
    }
}

fn infrastructure_failure(r: &ToolResult) -> Option<String> {
    match r.exit_code {
        UNAVAILABLE_EXIT => Some(format!(
            "judge tooling unavailable: {}",
            first_line(&r.stderr)
        )),
        TIMEOUT_EXIT if r.tool_name == crate::toolbox::IVERILOG_COMPILE => {
            Some("compile timed out".into())
        }
        _ => None,
    }
}

fn first_line(s: &str) -> &str {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("")
}

/// Line endings unified and trailing whitespace dropped, per line and at
/// the end of the file.
pub fn normalize_whitespace(s: &str) -> String {
    let unified = s.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    lines.join("\n").trim_end_matches('\n').to_string()
}

fn golden_compare(task: &TaskSpec, dir: &Path) -> (FailureMode, String) {
    for (path, golden) in &task.harness.golden_files {
        match fs::read_to_string(dir.join(path)) {
            Ok(actual) if normalize_whitespace(&actual) == normalize_whitespace(golden) => {}
            Ok(_) => {
                return (
                    FailureMode::Unknown,
                    format!("{path} differs from the golden file"),
                )
            }
            Err(_) => return (FailureMode::Unknown, format!("{path} missing")),
        }
    }
    (
        FailureMode::None,
        format!("{} golden file(s) match", task.harness.golden_files.len()),
    )
}

/// Copies regular files and directories from `src` into `dst`, skipping
/// the harness scratch directory and symlinks.
pub fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    let walker = WalkDir::new(src).follow_links(false).into_iter();
    for entry in walker.filter_entry(|e| e.depth() != 1 || e.file_name() != HARNESS_DIR) {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry.path().strip_prefix(src).map_err(io::Error::other)?;
        let target = dst.join(rel);
        if entry.file_type().is_dir() {
            fs::create_dir_all(&target)?;
        } else if entry.file_type().is_file() {
            fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

pub fn pass_at_1(outcomes: &[Outcome]) -> Result<f64, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    Ok(passed as f64 / outcomes.len() as f64)
}

/// A run to judge: its identity plus where its artifacts should be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledRun {
    pub run_id: String,
    pub task_id: String,
    pub config_id: String,
    pub trace_path: PathBuf,
    pub workspace: PathBuf,
}

impl ScheduledRun {
    fn as_ref(&self) -> RunRef<'_> {
        RunRef {
            run_id: &self.run_id,
            task_id: &self.task_id,
            config_id: &self.config_id,
        }
    }
}

/// Judges every scheduled run (in parallel) and groups pass@1 by
/// (config, subset). Runs whose trace file is missing count as `no_log`.
pub fn judge_corpus(
    tasks: &[TaskSpec],
    runs: &[ScheduledRun],
    judge: &Judge,
    parallelism: usize,
) -> (Vec<Outcome>, Vec<ScoreRow>) {
    let by_id: HashMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let outcomes = parallel_map(runs, parallelism, |run| {
        let Some(task) = by_id.get(run.task_id.as_str()) else {
            return Outcome::new(
                &run.as_ref(),
                FailureMode::HarnessFail,
                format!("task {} not in corpus", run.task_id),
            );
        };
        let loaded = if run.trace_path.exists() {
            read_trace(&run.trace_path).map_err(|e| format!("trace unreadable: {e}"))
        } else {
            Err("trace missing".to_string())
        };
        let loaded = loaded.and_then(|t| {
            if t.run_id == run.run_id {
                Ok(t)
            } else {
                Err(format!("trace belongs to run {}", t.run_id))
            }
        });
        judge.judge_run(
            task,
            run.as_ref(),
            loaded.as_ref().map_err(String::clone),
            Some(&run.workspace),
        )
    });
    let subsets: HashMap<&str, Subset> = tasks.iter().map(|t| (t.id.as_str(), t.subset)).collect();
    let rows = score_rows(&outcomes, &subsets);
    (outcomes, rows)
}

pub fn score_rows(outcomes: &[Outcome], subsets: &HashMap<&str, Subset>) -> Vec<ScoreRow> {
    let mut groups: BTreeMap<(String, Subset), (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let Some(subset) = subsets.get(o.task_id.as_str()) else {
            continue;
        };
        let g = groups.entry((o.config_id.clone(), *subset)).or_default();
        g.0 += 1;
        g.1 += o.passed as usize;
    }
    groups
        .into_iter()
        .map(|((config_id, subset), (n_runs, n_passed))| ScoreRow {
            config_id,
            subset,
            n_runs,
            n_passed,
            pass_at_1: n_passed as f64 / n_runs as f64,
        })
        .collect()
}

pub fn write_outcomes(path: &Path, outcomes: &[Outcome]) -> io::Result<()> {
    let mut body = String::new();
    for o in outcomes {
        body.push_str(&serde_json::to_string(o).map_err(io::Error::other)?);
        body.push('\n');
    }
    fs::write(path, body)
}

pub fn read_outcomes(path: &Path) -> io::Result<Vec<Outcome>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn o(passed: bool) -> Outcome {
        Outcome {
            run_id: "r".into(),
            task_id: "t".into(),
            config_id: "c".into(),
            passed,
            failure_mode: if passed {
                FailureMode::None
            } else {
                FailureMode::Unknown
            },
            detail: String::new(),
        }
    }

    #[test]
    fn pass_at_1_examples() {
        let mut v: Vec<Outcome> = (0..9).map(|_| o(true)).collect();
        v.extend((0..11).map(|_| o(false)));
        assert_eq!(pass_at_1(&v), Ok(0.45));
        assert_eq!(pass_at_1(&[o(true), o(true)]), Ok(1.0));
        assert_eq!(
            pass_at_1(&(0..5).map(|_| o(false)).collect::<Vec<_>>()),
            Ok(0.0)
        );
        assert_eq!(pass_at_1(&[]), Err(EvalError::Empty));
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("a  \r\nb\t\n\n\n"), "a\nb");
        assert_ne!(normalize_whitespace("a b"), normalize_whitespace("ab"));
        assert_ne!(normalize_whitespace("  a"), normalize_whitespace("a"));
    }

    proptest! {
        #[test]
        fn pass_at_1_order_invariant(flags in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
            let v: Vec<Outcome> = flags.iter().map(|f| o(*f)).collect();
            let mut w = v.clone();
            // deterministic shuffle
            let mut s = seed | 1;
            for i in (1..w.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                w.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(pass_at_1(&v), pass_at_1(&w));
            let p = pass_at_1(&v).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
