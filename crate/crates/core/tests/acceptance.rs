//! Acceptance gate. Prints one line per criterion and exits non-zero if any
//! criterion fails. Criteria whose prerequisites are missing (EDA binaries)
//! report SKIP.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::Value;

use common::*;
use rtlagent_core::agent::{
    read_trace, snapshot_workspace, write_trace, CrashReason, PromptVariant, RunStatus, RunTrace,
    GATE_REMINDER,
};
use rtlagent_core::analytics::{self, build_report, delta_pp, tool_delta, DeltaTable};
use rtlagent_core::corpus::{load_corpus, TaskSpec};
use rtlagent_core::evaluation::{
    judge_corpus, read_outcomes, FailureMode, Judge, Outcome, RunRef, ScheduledRun,
};
use rtlagent_core::harness::{analyze_sweep, judge_sweep, run_sweep, HarnessConfig, RunFilter};
use rtlagent_core::toolbox::{
    parse_module_ports, Catalog, Limits, PortError, ProcessRunner, ToolPaths, Toolbox, POLICY_EXIT,
    TASK_COMPLETE,
};

// Pinned tolerances.
/// Criterion 1: wall-clock bound per pipeline with stubbed tools.
const STUBBED_PIPELINE_LIMIT: Duration = Duration::from_secs(10);
/// Criterion 1: wall-clock bound per pipeline with the real binaries.
const REAL_PIPELINE_LIMIT: Duration = Duration::from_secs(60);
const REPETITIONS: usize = 5;
/// Criterion 3: percentages must agree at 0.1 pp resolution.
const PP_TOL: f64 = 0.05;
/// Criterion 3: distance allowed between our rounding of the reference
/// rate pair and its reference delta.
const REFERENCE_DELTA_TOL: f64 = 0.2;
const REFERENCE_RATES: (f64, f64) = (0.272, 0.078);
const REFERENCE_DELTA: f64 = 19.3;
/// Criterion 2: desk-scale context window and verbose output size.
const OVERFLOW_CONTEXT: u64 = 2_000;
const OVERFLOW_OUTPUT_BYTES: usize = 100_000;
const OUTPUT_CAP: usize = 8 * 1024;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "fixture end-to-end run -> judge -> analyze",
            c1_fixture_end_to_end,
        ),
        (2, "context-overflow reproduction", c2_context_overflow),
        (3, "analytics oracle", c3_analytics_oracle),
        (4, "failure-taxonomy partition", c4_taxonomy),
        (5, "port parser oracle", c5_port_parser),
        (6, "completion gate soundness", c6_gate),
        (7, "sandbox containment", c7_sandbox),
        (8, "EDA integration", c8_eda),
    ];
    let mut failed = 0;
    for (n, title, f) in criteria {
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n} [PRIMARY] {tag}: {title} -- {detail}");
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed or skipped");
}

fn verdict(c: Check) -> Verdict {
    match c {
        Ok(d) => Verdict::Pass(d),
        Err(d) => Verdict::Fail(d),
    }
}

fn tools_present(names: &[&str]) -> bool {
    let paths = ToolPaths::default();
    names.iter().all(|n| paths.resolve(n).is_some())
}

// ---------------------------------------------------------------------------
// 1

fn write_config(dir: &Path, stubs: bool) -> std::path::PathBuf {
    let stubs_line = if stubs {
        format!("tool_stubs = {:?}\n", btg("stubs.jsonl"))
    } else {
        String::new()
    };
    let text = format!(
        r#"corpus = {corpus:?}
output_root = "out"
parallelism = 1
{stubs_line}
[[agent]]
config_id = "mod2"
prompt_variant = "structured"
catalog = "expanded"
backend = {{ kind = "scripted", max_context_tokens = 200000, script_path = {script:?} }}
"#,
        corpus = btg("corpus.jsonl"),
        script = btg("structured_session.jsonl"),
    );
    let path = dir.join("harness.toml");
    fs::write(&path, text).unwrap();
    path
}

struct PipelineResult {
    trace_canonical: String,
    outcomes: String,
    report: Value,
    elapsed: Duration,
}

fn pipeline(stubs: bool) -> Result<PipelineResult, String> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HarnessConfig::load(&write_config(dir.path(), stubs)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = run_sweep(&cfg, &RunFilter::default()).map_err(|e| e.to_string())?;
    ensure(
        summary.records.len() == 1,
        format!("expected 1 run, got {}", summary.records.len()),
    )?;
    ensure(
        summary.internal_errors().next().is_none(),
        "internal harness error",
    )?;
    let outcomes = judge_sweep(&cfg.output_root).map_err(|e| e.to_string())?;
    analyze_sweep(&cfg.output_root).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let run = &summary.records[0].run;
    let trace = read_trace(&run.trace_path).map_err(|e| e.to_string())?;
    ensure(
        trace.status == RunStatus::Completed,
        format!("status {}", trace.status),
    )?;
    ensure(
        outcomes.len() == 1 && outcomes[0].passed,
        format!("outcome {:?}", outcomes.first().map(|o| &o.detail)),
    )?;
    let expected: BTreeSet<String> = BTreeSet::from([TARGET.to_string()]);
    ensure(
        trace.modified_files == expected,
        format!("modified_files {:?}", trace.modified_files),
    )?;

    let mut report: Value =
        serde_json::from_str(&fs::read_to_string(cfg.output_root.join("report.json")).unwrap())
            .unwrap();
    report["metadata"]["generated_at"] = Value::Null;
    Ok(PipelineResult {
        trace_canonical: trace.canonical_json(),
        outcomes: fs::read_to_string(cfg.output_root.join("outcomes.jsonl")).unwrap(),
        report,
        elapsed,
    })
}

fn c1_fixture_end_to_end() -> Verdict {
    verdict((|| {
        let mut runs = Vec::new();
        for _ in 0..REPETITIONS {
            runs.push(pipeline(true)?);
        }
        let first = &runs[0];
        for (i, r) in runs.iter().enumerate().skip(1) {
            ensure(
                r.trace_canonical == first.trace_canonical,
                format!("trace of repetition {i} differs"),
            )?;
            ensure(
                r.outcomes == first.outcomes,
                format!("outcomes of repetition {i} differ"),
            )?;
            ensure(
                r.report == first.report,
                format!("report of repetition {i} differs"),
            )?;
        }
        let slowest = runs.iter().map(|r| r.elapsed).max().unwrap();
        ensure(
            slowest < STUBBED_PIPELINE_LIMIT,
            format!("stubbed pipeline took {slowest:?}"),
        )?;
        let mut detail =
            format!("{REPETITIONS} identical stubbed repetitions, slowest {slowest:.2?}");
        if tools_present(&["iverilog", "vvp", "verilator", "yosys"]) {
            let real = pipeline(false)?;
            ensure(
                real.elapsed < REAL_PIPELINE_LIMIT,
                format!("real-tool pipeline took {:?}", real.elapsed),
            )?;
            detail.push_str(&format!("; real tools {:.2?}", real.elapsed));
        } else {
            detail.push_str("; real-tool timing skipped (binaries absent)");
        }
        Ok(detail)
    })())
}

// ---------------------------------------------------------------------------
// 2

fn overflow_run(cap: Option<usize>, root: &Path) -> RunTrace {
    let mut cfg = agent(
        "overflow",
        PromptVariant::Baseline,
        Catalog::Basic,
        "overflow_session.jsonl",
        OVERFLOW_CONTEXT,
    );
    cfg.output_cap_bytes = cap;
    run_session(
        root,
        &btg_task(),
        &cfg,
        stub_runner("overflow_stubs.jsonl"),
        "binary_to_gray__overflow__0001",
    )
    .trace
}

fn c2_context_overflow() -> Verdict {
    let rules =
        rtlagent_core::toolbox::StubRunner::load_rules(&btg("overflow_stubs.jsonl")).unwrap();
    let sim_bytes = rules
        .iter()
        .find(|r| r.program == "vvp")
        .map(|r| r.stdout.len())
        .unwrap_or(0);
    if sim_bytes != OVERFLOW_OUTPUT_BYTES {
        return Verdict::Fail(format!("fixture simulation output is {sim_bytes} bytes"));
    }
    let mut problems = Vec::new();
    let mut notes = Vec::new();

    // Uncapped branch: must crash on overflow and judge as agent_crash.
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let un1 = overflow_run(None, a.path());
    let un2 = overflow_run(None, b.path());
    if un1.canonical_json() != un2.canonical_json() {
        problems.push("uncapped branch not deterministic".to_string());
    }
    if un1.status != RunStatus::Crashed || un1.crash_reason != Some(CrashReason::ContextOverflow) {
        problems.push(format!(
            "uncapped: status {} reason {:?}",
            un1.status, un1.crash_reason
        ));
    } else {
        let judge = Judge::new(stub_runner("overflow_stubs.jsonl"), Duration::from_secs(30));
        let run = RunRef {
            run_id: &un1.run_id,
            task_id: &un1.task_id,
            config_id: &un1.config_id,
        };
        let ws = a.path().join("workspaces").join(&un1.run_id);
        let o = judge.judge_run(&btg_task(), run, Ok(&un1), Some(&ws));
        if o.failure_mode != FailureMode::AgentCrash {
            problems.push(format!("uncapped: judged {}", o.failure_mode));
        } else {
            notes.push(format!(
                "uncapped crashed ({}) and judged agent_crash",
                un1.crash_detail.as_deref().unwrap_or("")
            ));
        }
    }

    // Capped branch: must complete.
    let (c, d) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cap1 = overflow_run(Some(OUTPUT_CAP), c.path());
    let cap2 = overflow_run(Some(OUTPUT_CAP), d.path());
    if cap1.canonical_json() != cap2.canonical_json() {
        problems.push("capped branch not deterministic".to_string());
    }
    if cap1.status != RunStatus::Completed {
        problems.push(format!(
            "capped ({OUTPUT_CAP} B): status {} {:?}: {}",
            cap1.status,
            cap1.crash_reason,
            cap1.crash_detail.as_deref().unwrap_or("")
        ));
    } else {
        notes.push("capped completed".into());
    }
    if problems.is_empty() {
        Verdict::Pass(notes.join("; "))
    } else {
        Verdict::Fail(problems.join("; "))
    }
}

// ---------------------------------------------------------------------------
// 3

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < PP_TOL
}

fn c3_analytics_oracle() -> Verdict {
    verdict((|| {
        let dir = fixtures().join("analytics");
        let tasks = load_corpus(&dir.join("corpus.jsonl")).map_err(|e| e.to_string())?;
        let outcomes = read_outcomes(&dir.join("outcomes.jsonl")).map_err(|e| e.to_string())?;
        let mut traces = Vec::new();
        for entry in fs::read_dir(dir.join("runs")).unwrap() {
            traces.push(read_trace(&entry.unwrap().path()).map_err(|e| e.to_string())?);
        }
        traces.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        let exp: Value =
            serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
        ensure(
            outcomes.len() as u64 == exp["n_runs"].as_u64().unwrap(),
            "run count",
        )?;
        ensure(
            traces.len() as u64 == exp["n_traces"].as_u64().unwrap(),
            "trace count",
        )?;

        let report = build_report(
            "analytics",
            &tasks,
            &traces,
            &outcomes,
            DateTime::<Utc>::UNIX_EPOCH,
        )
        .map_err(|e| e.to_string())?;
        let mut checked = 0usize;
        let mut check = |ok: bool, what: String| -> Result<(), String> {
            checked += 1;
            ensure(ok, what)
        };
        for (cid, e) in exp["configs"].as_object().unwrap() {
            let sec = report.config(cid).ok_or(format!("missing config {cid}"))?;
            let f = |v: &Value| v.as_f64().unwrap();

            let comp = sec.completion.as_ref().ok_or("no completion row")?;
            check(
                close(comp.completed_pct, f(&e["completion"]["completed_pct"])),
                format!("{cid} completed%"),
            )?;
            check(
                close(comp.crashed_pct, f(&e["completion"]["crashed_pct"])),
                format!("{cid} crashed%"),
            )?;
            check(
                (comp.completed_pct + comp.crashed_pct - 100.0).abs() <= PP_TOL,
                format!("{cid} conservation"),
            )?;

            let usage = e["tool_usage"].as_object().unwrap();
            check(
                sec.tool_usage.len() == usage.len(),
                format!(
                    "{cid} tool rows {} vs {}",
                    sec.tool_usage.len(),
                    usage.len()
                ),
            )?;
            for (tool, u) in usage {
                let row = sec
                    .tool_usage
                    .iter()
                    .find(|r| &r.tool == tool)
                    .ok_or(format!("{cid} missing usage row {tool}"))?;
                check(
                    close(row.usage_pct(), f(&u["usage_pct"])),
                    format!("{cid} {tool} usage%"),
                )?;
                check(
                    (row.avg_display() - f(&u["avg_calls"])).abs() < 0.005,
                    format!("{cid} {tool} avg/run"),
                )?;
            }

            for (tool, d) in e["tool_delta"].as_object().unwrap() {
                let row = sec
                    .tool_delta
                    .get(tool)
                    .ok_or(format!("{cid} missing delta row {tool}"))?;
                check(
                    close(row.delta_pp, f(d)),
                    format!("{cid} {tool} delta {} vs {}", row.delta_pp, f(d)),
                )?;
            }

            for (level, d) in e["difficulty"].as_object().unwrap() {
                let row = sec
                    .difficulty
                    .iter()
                    .find(|r| r.difficulty.to_string() == *level)
                    .ok_or(format!("{cid} missing {level}"))?;
                check(
                    close(row.pass_pct(), f(&d["pass_pct"])),
                    format!("{cid} {level} pass%"),
                )?;
                check(
                    close(row.crash_pct(), f(&d["crash_pct"])),
                    format!("{cid} {level} crash%"),
                )?;
            }
            check(
                sec.difficulty.len() == e["difficulty"].as_object().unwrap().len(),
                format!("{cid} difficulty rows"),
            )?;

            let ftp = sec
                .finish_to_prob_pass
                .ok_or("finish_to_prob_pass undefined")?;
            check(
                (ftp - f(&e["finish_to_prob_pass"]["value"])).abs() < 1e-12,
                format!("{cid} finish_to_prob_pass"),
            )?;

            let mut total = 0;
            for (mode, n) in e["failure_modes"].as_object().unwrap() {
                let got = sec.failure_modes.get(mode).copied().unwrap_or(0);
                check(got == n.as_u64().unwrap(), format!("{cid} mode {mode}"))?;
                total += got;
            }
            check(
                total == sec.n_runs,
                format!("{cid} failure modes partition runs"),
            )?;

            let score = report
                .score_rows
                .iter()
                .find(|r| &r.config_id == cid)
                .ok_or("no score row")?;
            let p = analytics::pct1(score.n_passed as i64, score.n_runs as u64);
            check(close(p, f(&e["pass_at_1_pct"])), format!("{cid} pass@1"))?;
        }

        // antisymmetry under label swap
        let flipped: Vec<Outcome> = outcomes
            .iter()
            .map(|o| {
                let mut o = o.clone();
                o.passed = !o.passed;
                o.failure_mode = if o.passed {
                    FailureMode::None
                } else {
                    FailureMode::Unknown
                };
                o
            })
            .collect();
        for cid in report.metadata.config_ids.iter() {
            let group: Vec<RunTrace> = traces
                .iter()
                .filter(|t| &t.config_id == cid)
                .cloned()
                .collect();
            let (DeltaTable::Defined { rows: a }, DeltaTable::Defined { rows: b }) =
                (tool_delta(&group, &outcomes), tool_delta(&group, &flipped))
            else {
                return Err(format!("{cid}: delta undefined"));
            };
            for r in &a {
                let o = b
                    .iter()
                    .find(|x| x.tool == r.tool)
                    .ok_or("row lost on flip")?;
                check(
                    r.delta_pp == -o.delta_pp,
                    format!("{cid} {} antisymmetry", r.tool),
                )?;
            }
        }

        let reference = delta_pp(REFERENCE_RATES.0, REFERENCE_RATES.1);
        check(
            (reference - REFERENCE_DELTA).abs() <= REFERENCE_DELTA_TOL,
            format!("reference rate pair gives {reference}"),
        )?;
        Ok(format!(
            "{checked} values match the oracle; rate pair (0.272, 0.078) -> +{reference} pp"
        ))
    })())
}

// ---------------------------------------------------------------------------
// 4

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Fault {
    MissingTrace,
    CrashedTrace,
    BrokenHarness,
    WrongRtl,
}

fn expected_mode(faults: &[Fault]) -> FailureMode {
    if faults.contains(&Fault::MissingTrace) {
        FailureMode::NoLog
    } else if faults.contains(&Fault::CrashedTrace) {
        FailureMode::AgentCrash
    } else if faults.contains(&Fault::BrokenHarness) {
        FailureMode::HarnessFail
    } else if faults.contains(&Fault::WrongRtl) {
        FailureMode::Unknown
    } else {
        FailureMode::None
    }
}

fn broken_task() -> TaskSpec {
    let mut t = btg_task();
    t.id = "binary_to_gray_broken".into();
    t.harness.tb_files = vec!["verif/tb_missing.sv".into()];
    t
}

fn c4_taxonomy() -> Verdict {
    verdict((|| {
        use Fault::*;
        let all = [MissingTrace, CrashedTrace, BrokenHarness, WrongRtl];
        let mut cases: Vec<Vec<Fault>> = vec![vec![]];
        cases.extend(all.iter().map(|f| vec![*f]));
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                cases.push(vec![all[i], all[j]]);
            }
        }
        let root = tempfile::tempdir().unwrap();
        let good = btg_task();
        let broken = broken_task();
        let cfg = agent(
            "mod2",
            PromptVariant::Structured,
            Catalog::Expanded,
            "structured_session.jsonl",
            200_000,
        );
        let mut runs = Vec::new();
        for (k, faults) in cases.iter().enumerate() {
            let task = if faults.contains(&BrokenHarness) {
                &broken
            } else {
                &good
            };
            let run_id = format!("{}__mod2__{:04}", task.id, k + 1);
            let s = run_session(root.path(), task, &cfg, stub_runner("stubs.jsonl"), &run_id);
            ensure(
                s.trace.status == RunStatus::Completed,
                format!("setup run {run_id} did not complete"),
            )?;
            if faults.contains(&WrongRtl) {
                let p = s.workspace.join(TARGET);
                let text = fs::read_to_string(&p)
                    .unwrap()
                    .replace("(binary_in >> 1)", "(binary_in << 1)");
                fs::write(&p, text).unwrap();
            }
            if faults.contains(&CrashedTrace) {
                let mut t = s.trace.clone();
                t.status = RunStatus::Crashed;
                t.crash_reason = Some(CrashReason::ContextOverflow);
                write_trace(s.trace_path.parent().unwrap(), &t).unwrap();
            }
            if faults.contains(&MissingTrace) {
                fs::remove_file(&s.trace_path).unwrap();
            }
            runs.push(ScheduledRun {
                run_id,
                task_id: task.id.clone(),
                config_id: "mod2".into(),
                trace_path: s.trace_path,
                workspace: s.workspace,
            });
        }
        let judge = Judge::new(stub_runner("stubs.jsonl"), Duration::from_secs(30));
        let (outcomes, _) = judge_corpus(&[good.clone(), broken.clone()], &runs, &judge, 4);
        ensure(outcomes.len() == runs.len(), "one outcome per run")?;
        let mut counts: BTreeMap<FailureMode, usize> = BTreeMap::new();
        for (faults, o) in cases.iter().zip(&outcomes) {
            ensure(
                o.is_consistent(),
                format!("{}: passed flag disagrees with mode", o.run_id),
            )?;
            let want = expected_mode(faults);
            ensure(
                o.failure_mode == want,
                format!(
                    "{faults:?}: got {} want {want} ({})",
                    o.failure_mode, o.detail
                ),
            )?;
            *counts.entry(o.failure_mode).or_default() += 1;
        }
        ensure(
            counts.values().sum::<usize>() == runs.len(),
            "counts do not sum to n_runs",
        )?;
        let shown: Vec<String> = FailureMode::ALL
            .iter()
            .map(|m| format!("{m}={}", counts.get(m).unwrap_or(&0)))
            .collect();
        Ok(format!(
            "{} runs ({} pairwise), {}",
            runs.len(),
            cases.len() - 5,
            shown.join(" ")
        ))
    })())
}

// ---------------------------------------------------------------------------
// 5

fn c5_port_parser() -> Verdict {
    verdict((|| {
        let dir = fixtures().join("ports");
        let exp: BTreeMap<String, Value> =
            serde_json::from_str(&fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
        let mut modules = 0;
        for (file, want) in &exp {
            let src = fs::read_to_string(dir.join(file)).unwrap();
            let got = parse_module_ports(&src);
            if let Some(err) = want.get("error") {
                ensure(err == "non_ansi", "unknown expected error")?;
                let line = want["line"].as_u64().unwrap() as usize;
                match got {
                    Err(PortError::NonAnsi { line_no, .. }) if line_no == line => {}
                    other => {
                        return Err(format!(
                            "{file}: expected non-ANSI error at line {line}, got {other:?}"
                        ))
                    }
                }
                continue;
            }
            let ports = got.map_err(|e| format!("{file}: {e}"))?;
            let want = want.as_array().unwrap();
            ensure(
                ports.len() == want.len(),
                format!("{file}: {} ports, expected {}", ports.len(), want.len()),
            )?;
            for (p, w) in ports.iter().zip(want) {
                let w = w.as_array().unwrap();
                let ok = p.direction.to_string() == w[0]
                    && p.name == w[1]
                    && p.range.as_deref() == w[2].as_str()
                    && p.width() == w[3].as_u64();
                ensure(ok, format!("{file}: got {p}, expected {w:?}"))?;
            }
            modules += 1;
        }
        ensure(modules >= 10, format!("only {modules} module fixtures"))?;
        Ok(format!("{modules} modules match; non-ANSI header rejected"))
    })())
}

// ---------------------------------------------------------------------------
// 6

fn c6_gate() -> Verdict {
    verdict((|| {
        let root = tempfile::tempdir().unwrap();
        let cfg = agent(
            "gate",
            PromptVariant::Structured,
            Catalog::Basic,
            "gate_session.jsonl",
            200_000,
        );
        let t = run_session(
            root.path(),
            &btg_task(),
            &cfg,
            stub_runner("stubs.jsonl"),
            "binary_to_gray__gate__0001",
        )
        .trace;
        ensure(
            t.status == RunStatus::Completed,
            format!("status {}", t.status),
        )?;
        ensure(t.turns.len() == 3, format!("{} turns", t.turns.len()))?;
        let first = &t.turns[0];
        let rejected = first
            .calls
            .iter()
            .zip(&first.results)
            .any(|(c, r)| c.tool_name == TASK_COMPLETE && !r.success());
        ensure(rejected, "premature task_complete was not rejected")?;
        ensure(
            first
                .harness_messages
                .iter()
                .any(|m| m.contains("before a successful `iverilog_compile`")),
            "reminder missing from trace",
        )?;
        ensure(
            first.harness_messages.iter().any(|m| m == GATE_REMINDER),
            "reminder text altered",
        )?;
        let compiled = t.turns[1]
            .calls
            .iter()
            .zip(&t.turns[1].results)
            .any(|(c, r)| c.tool_name == "iverilog_compile" && r.success());
        ensure(compiled, "no successful compile after rejection")?;
        let accepted = t.turns[2]
            .calls
            .iter()
            .zip(&t.turns[2].results)
            .any(|(c, r)| c.tool_name == TASK_COMPLETE && r.success());
        ensure(accepted, "second task_complete not accepted")?;
        Ok("rejected, compiled, re-signalled, completed".into())
    })())
}

// ---------------------------------------------------------------------------
// 7

fn c7_sandbox() -> Verdict {
    verdict((|| {
        let tmp = tempfile::tempdir().unwrap();
        let base = tmp.path().join("outer/inner");
        let ws = base.join("ws");
        let decoy = base.join("decoy");
        fs::create_dir_all(ws.join("rtl")).unwrap();
        fs::create_dir_all(decoy.join("nested")).unwrap();
        fs::write(decoy.join("secret.txt"), "do not touch\n").unwrap();
        fs::write(decoy.join("nested/data.bin"), [0u8, 1, 2, 3]).unwrap();
        fs::write(ws.join("rtl/top.sv"), "module top; endmodule\n").unwrap();
        let before = snapshot_workspace(&decoy);
        let probe = Path::new("/tmp/escape_probe");
        let probe_existed = probe.exists();

        let hostile = [
            "cat /etc/passwd",
            "rm -rf ../..",
            "rm -rf ../decoy",
            "cat ../decoy/secret.txt",
            "cp rtl/top.sv ../decoy/secret.txt",
            "echo pwned > ../decoy/secret.txt",
            "ln -s /etc etc_link",
            "cd .. && rm -rf decoy",
            "mv ../decoy ../gone",
            "touch /tmp/escape_probe",
        ];
        let benign = [
            "ls -R",
            "echo ok > notes.txt",
            "cat rtl/top.sv",
            "mkdir -p build && cp rtl/top.sv build/",
            "wc -l rtl/top.sv",
        ];
        let mut batch: Vec<(&str, bool)> = hostile
            .iter()
            .map(|c| (*c, true))
            .chain(benign.iter().map(|c| (*c, false)))
            .collect();
        batch.shuffle(&mut StdRng::seed_from_u64(7));

        let toolbox = Toolbox::new(
            Arc::new(ProcessRunner::default()),
            Limits {
                timeout: Duration::from_secs(10),
                output_cap: Some(OUTPUT_CAP),
            },
        );
        let mut blocked = 0;
        for (cmd, is_hostile) in &batch {
            let r = toolbox.exec_shell(&ws, cmd);
            if *is_hostile {
                ensure(
                    r.exit_code == POLICY_EXIT,
                    format!("`{cmd}` was not blocked (exit {})", r.exit_code),
                )?;
                ensure(
                    r.stderr.contains("policy violation") || r.stdout.contains("policy violation"),
                    "no violation message",
                )?;
                blocked += 1;
            } else {
                ensure(
                    r.exit_code != POLICY_EXIT,
                    format!("benign `{cmd}` was blocked"),
                )?;
            }
        }
        ensure(
            snapshot_workspace(&decoy) == before,
            "decoy directory changed",
        )?;
        ensure(
            probe_existed || !probe.exists(),
            "escape probe created outside the workspace",
        )?;
        Ok(format!(
            "{blocked} hostile commands blocked, decoy hash-identical"
        ))
    })())
}

// ---------------------------------------------------------------------------
// 8

fn c8_eda() -> Verdict {
    let needed = ["iverilog", "vvp", "yosys", "yosys-smtbmc"];
    if !tools_present(&needed) {
        let missing: Vec<&str> = needed
            .iter()
            .copied()
            .filter(|n| ToolPaths::default().resolve(n).is_none())
            .collect();
        return Verdict::Skip(format!("binaries absent: {}", missing.join(", ")));
    }
    verdict((|| {
        let tmp = tempfile::tempdir().unwrap();
        let ws = tmp.path();
        let task = btg_task();
        for (rel, content) in &task.context_files {
            let p = ws.join(rel);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, content).unwrap();
        }
        fs::create_dir_all(ws.join("rtl")).unwrap();
        fs::write(ws.join(TARGET), &task.harness.golden_files[TARGET]).unwrap();
        fs::create_dir_all(ws.join("eda")).unwrap();
        for f in ["latch.sv", "mutated_xor_assert.sv"] {
            fs::copy(fixtures().join("eda").join(f), ws.join("eda").join(f)).unwrap();
        }
        let tb = Toolbox::new(
            Arc::new(ProcessRunner::default()),
            Limits {
                timeout: Duration::from_secs(60),
                output_cap: None,
            },
        );
        let files = vec![TARGET.to_string(), "verif/tb_binary_to_gray.sv".to_string()];
        let c = tb.iverilog_compile(ws, &files, "a.out");
        ensure(c.success(), format!("compile failed: {}", c.stderr))?;
        let s = tb.vvp_simulate(ws, "a.out");
        ensure(
            s.stdout.contains("Time=10 Binary=0001 Gray=0001"),
            format!("transcript: {}", s.stdout),
        )?;

        let y = tb.yosys_synth(ws, &["eda/latch.sv".to_string()], Some("latchy"));
        let latches = y
            .stdout
            .lines()
            .find_map(|l| l.strip_prefix("Latch summary: "))
            .and_then(|r| r.split_whitespace().next())
            .and_then(|n| n.parse::<u32>().ok())
            .unwrap_or(0);
        ensure(latches >= 1, format!("no latch reported: {}", y.stdout))?;

        let f = tb.formal_verify(
            ws,
            &["eda/mutated_xor_assert.sv".to_string()],
            5,
            Some("gray_check"),
        );
        ensure(
            f.stdout.contains("counterexample"),
            format!("no counterexample: {} {}", f.stdout, f.stderr),
        )?;
        Ok(format!(
            "simulation transcript matches; {latches} latch(es); counterexample found"
        ))
    })())
}
