use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;

use super::ports::{parse_module_ports, strip_comments, PortError, PortInfo};
use super::runner::{CommandRunner, Invocation, ProcessRunner, RunOutcome};
use super::truncate::cap_streams;
use super::*;
use crate::sandbox;

/// Harness-owned scratch directory inside each workspace. Build artifacts
/// of the structured tools live here and file tracking ignores it.
pub const HARNESS_DIR: &str = ".harness";
pub const BUILD_DIR: &str = ".harness/build";
const FORMAL_DIR: &str = ".harness/formal";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Duration,
    /// `None` disables output capping.
    pub output_cap: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            timeout: Duration::from_secs(DEFAULT_TIMEOUT_S),
            output_cap: Some(DEFAULT_OUTPUT_CAP),
        }
    }
}

#[derive(Clone)]
pub struct Toolbox {
    runner: Arc<dyn CommandRunner>,
    limits: Limits,
}

impl Default for Toolbox {
    fn default() -> Self {
        Toolbox::new(Arc::new(ProcessRunner::default()), Limits::default())
    }
}

impl Toolbox {
    pub fn new(runner: Arc<dyn CommandRunner>, limits: Limits) -> Self {
        Toolbox { runner, limits }
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn runner(&self) -> Arc<dyn CommandRunner> {
        Arc::clone(&self.runner)
    }

    /// Dispatches a call by tool name. `args` uses the argument names from
    /// the tool specs; `files` is whitespace separated.
    pub fn execute(&self, ws: &Path, tool: &str, args: &BTreeMap<String, String>) -> ToolResult {
        let get = |k: &str| args.get(k).map(String::as_str).unwrap_or("");
        let files: Vec<String> = get("files")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let top = Some(get("top")).filter(|t| !t.is_empty());
        match tool {
            SHELL_EXEC => self.exec_shell(ws, get("command")),
            IVERILOG_COMPILE => {
                let out = Some(get("out"))
                    .filter(|o| !o.is_empty())
                    .unwrap_or("a.out");
                self.iverilog_compile(ws, &files, out)
            }
            VVP_SIMULATE => {
                let out = Some(get("out"))
                    .or(files.first().map(String::as_str))
                    .filter(|o| !o.is_empty())
                    .unwrap_or("a.out");
                self.vvp_simulate(ws, out)
            }
            VERILATOR_LINT => self.verilator_lint(ws, &files),
            YOSYS_LINT => self.yosys_lint(ws, &files, top),
            YOSYS_SYNTH => self.yosys_synth(ws, &files, top),
            GET_MODULE_PORTS => {
                let file = Some(get("file"))
                    .filter(|f| !f.is_empty())
                    .or(files.first().map(String::as_str))
                    .unwrap_or("");
                self.module_ports_tool(ws, file)
            }
            FORMAL_VERIFY => {
                let depth = match get("depth") {
                    "" => 20,
                    d => match d.parse::<u32>() {
                        Ok(n) => n,
                        Err(_) => {
                            return ToolResult::failure(
                                FORMAL_VERIFY,
                                USAGE_EXIT,
                                format!("invalid depth `{d}`"),
                            )
                        }
                    },
                };
                self.formal_verify(ws, &files, depth, top)
            }
            other => ToolResult::failure(other, USAGE_EXIT, format!("unknown tool `{other}`")),
        }
    }

    pub fn exec_shell(&self, ws: &Path, command: &str) -> ToolResult {
        if command.trim().is_empty() {
            return ToolResult::failure(
                SHELL_EXEC,
                USAGE_EXIT,
                "precondition violation: empty command",
            );
        }
        if let Err(v) = sandbox::check_command(command) {
            return ToolResult::failure(SHELL_EXEC, POLICY_EXIT, format!("policy violation: {v}"));
        }
        let inv = self.invocation(ws, "sh", vec!["-c".into(), command.into()]);
        self.finish(SHELL_EXEC, self.runner.run(&inv))
    }

    pub fn iverilog_compile(&self, ws: &Path, files: &[String], out_name: &str) -> ToolResult {
        if let Err(r) = check_files(IVERILOG_COMPILE, files) {
            return r;
        }
        if let Err(v) = sandbox::check_relative_path(out_name) {
            return ToolResult::failure(
                IVERILOG_COMPILE,
                POLICY_EXIT,
                format!("policy violation: {v}"),
            );
        }
        let out_path = Path::new(BUILD_DIR).join(out_name);
        if let Some(parent) = out_path.parent() {
            let _ = fs::create_dir_all(ws.join(parent));
        }
        let mut args = vec![
            "-g2012".to_string(),
            "-o".into(),
            out_path.to_string_lossy().into_owned(),
        ];
        args.extend(files.iter().cloned());
        let mut res = self.finish(
            IVERILOG_COMPILE,
            self.runner.run(&self.invocation(ws, "iverilog", args)),
        );
        if res.success() {
            append_line(&mut res.stdout, "Compilation successful.");
        }
        res
    }

    /// Runs a simulation built by [`Toolbox::iverilog_compile`] (looked up in
    /// the build directory first, then in the workspace).
    pub fn vvp_simulate(&self, ws: &Path, out_name: &str) -> ToolResult {
        if let Err(v) = sandbox::check_relative_path(out_name) {
            return ToolResult::failure(
                VVP_SIMULATE,
                POLICY_EXIT,
                format!("policy violation: {v}"),
            );
        }
        let built = Path::new(BUILD_DIR).join(out_name);
        let target = if ws.join(&built).is_file() {
            built
        } else if ws.join(out_name).is_file() {
            PathBuf::from(out_name)
        } else {
            return ToolResult::failure(
                VVP_SIMULATE,
                USAGE_EXIT,
                format!(
                    "missing artifact: `{out_name}` does not exist; run iverilog_compile first"
                ),
            );
        };
        let args = vec!["-n".to_string(), target.to_string_lossy().into_owned()];
        self.finish(
            VVP_SIMULATE,
            self.runner.run(&self.invocation(ws, "vvp", args)),
        )
    }

    pub fn verilator_lint(&self, ws: &Path, files: &[String]) -> ToolResult {
        if let Err(r) = check_files(VERILATOR_LINT, files) {
            return r;
        }
        let mut args: Vec<String> = vec!["--lint-only".into(), "-Wall".into(), "-Wno-fatal".into()];
        args.extend(files.iter().cloned());
        let mut res = self.finish(
            VERILATOR_LINT,
            self.runner.run(&self.invocation(ws, "verilator", args)),
        );
        if res.exit_code == UNAVAILABLE_EXIT || res.timed_out {
            return res;
        }
        let text = format!("{}\n{}", res.stdout, res.stderr);
        let warnings = text.lines().filter(|l| l.starts_with("%Warning")).count();
        let errors = text.lines().filter(|l| l.starts_with("%Error")).count();
        if errors > 0 {
            if res.exit_code == 0 {
                res.exit_code = 1;
            }
            append_line(
                &mut res.stdout,
                &format!("Lint failed: {errors} error(s), {warnings} warning(s)."),
            );
        } else if res.exit_code == 0 {
            if warnings == 0 {
                append_line(&mut res.stdout, "Lint clean.");
            } else {
                append_line(
                    &mut res.stdout,
                    &format!("Lint passed with {warnings} warning(s), no errors."),
                );
            }
        }
        res
    }

    pub fn yosys_lint(&self, ws: &Path, files: &[String], top: Option<&str>) -> ToolResult {
        if let Err(r) = check_files(YOSYS_LINT, files) {
            return r;
        }
        let script = format!(
            "read_verilog -sv {}; hierarchy -check {}; proc; check -assert",
            files.join(" "),
            top_flag(top)
        );
        let mut res = self.finish(
            YOSYS_LINT,
            self.runner
                .run(&self.invocation(ws, "yosys", vec!["-p".into(), script])),
        );
        if res.success() {
            append_line(&mut res.stdout, "Yosys lint clean.");
        }
        res
    }

    pub fn yosys_synth(&self, ws: &Path, files: &[String], top: Option<&str>) -> ToolResult {
        if let Err(r) = check_files(YOSYS_SYNTH, files) {
            return r;
        }
        let script = format!(
            "read_verilog -sv {}; synth {}; stat",
            files.join(" "),
            top_flag(top)
        );
        let outcome = self
            .runner
            .run(&self.invocation(ws, "yosys", vec!["-p".into(), script]));
        // latch detection needs the full log, before capping
        let latches = match &outcome {
            RunOutcome::Finished(raw) => Some(count_latches(&raw.stdout)),
            _ => None,
        };
        let mut res = self.finish(YOSYS_SYNTH, outcome);
        if let Some(n) = latches {
            if res.success() && n == 0 {
                append_line(&mut res.stdout, "Synthesis clean.");
            }
            append_line(
                &mut res.stdout,
                &format!("Latch summary: {n} inferred latch(es)"),
            );
        }
        res
    }

    pub fn get_module_ports(&self, ws: &Path, file: &str) -> Result<Vec<PortInfo>, ToolResult> {
        if file.is_empty() {
            return Err(ToolResult::failure(
                GET_MODULE_PORTS,
                USAGE_EXIT,
                "precondition violation: no file given",
            ));
        }
        if let Err(v) = sandbox::check_relative_path(file) {
            return Err(ToolResult::failure(
                GET_MODULE_PORTS,
                POLICY_EXIT,
                format!("policy violation: {v}"),
            ));
        }
        let src = fs::read_to_string(ws.join(file)).map_err(|e| {
            ToolResult::failure(
                GET_MODULE_PORTS,
                USAGE_EXIT,
                format!("cannot read `{file}`: {e}"),
            )
        })?;
        parse_module_ports(&src)
            .map_err(|e: PortError| ToolResult::failure(GET_MODULE_PORTS, 1, e.to_string()))
    }

    fn module_ports_tool(&self, ws: &Path, file: &str) -> ToolResult {
        match self.get_module_ports(ws, file) {
            Ok(ports) => {
                let mut out = format!("{} port(s) in {file}:\n", ports.len());
                for p in &ports {
                    out.push_str(&p.to_string());
                    out.push('\n');
                }
                ToolResult::ok(GET_MODULE_PORTS, out)
            }
            Err(res) => res,
        }
    }

    /// Bounded model checking via Yosys + yosys-smtbmc. Designs without
    /// assertions succeed as "not applicable".
    pub fn formal_verify(
        &self,
        ws: &Path,
        files: &[String],
        depth: u32,
        top: Option<&str>,
    ) -> ToolResult {
        if let Err(r) = check_files(FORMAL_VERIFY, files) {
            return r;
        }
        if depth == 0 {
            return ToolResult::failure(
                FORMAL_VERIFY,
                USAGE_EXIT,
                "precondition violation: depth must be >= 1",
            );
        }
        let mut sources = String::new();
        for f in files {
            match fs::read_to_string(ws.join(f)) {
                Ok(s) => sources.push_str(&s),
                Err(e) => {
                    return ToolResult::failure(
                        FORMAL_VERIFY,
                        USAGE_EXIT,
                        format!("cannot read `{f}`: {e}"),
                    )
                }
            }
        }
        if !has_assertions(&sources) {
            return ToolResult::ok(
                FORMAL_VERIFY,
                "not applicable: no assertions found in the given files\n",
            );
        }
        let _ = fs::create_dir_all(ws.join(FORMAL_DIR));
        let smt = format!("{FORMAL_DIR}/design.smt2");
        let script = format!(
            "read_verilog -sv -formal {}; prep {}; async2sync; dffunmap; write_smt2 -wires {smt}",
            files.join(" "),
            top_flag(top)
        );
        let prep = self.finish(
            FORMAL_VERIFY,
            self.runner
                .run(&self.invocation(ws, "yosys", vec!["-p".into(), script])),
        );
        if !prep.success() {
            return prep;
        }
        let args = vec!["-t".to_string(), depth.to_string(), smt];
        let mut res = self.finish(
            FORMAL_VERIFY,
            self.runner.run(&self.invocation(ws, "yosys-smtbmc", args)),
        );
        if res.exit_code == UNAVAILABLE_EXIT || res.timed_out {
            return res;
        }
        let text = format!("{}\n{}", res.stdout, res.stderr);
        if text.contains("Status: FAILED") || text.contains("Assert failed") {
            if res.exit_code == 0 {
                res.exit_code = 1;
            }
            append_line(
                &mut res.stdout,
                &format!("BMC: counterexample found within depth {depth}."),
            );
        } else if res.exit_code == 0 && text.contains("Status: PASSED") {
            append_line(
                &mut res.stdout,
                &format!("BMC: all assertions hold to depth {depth}."),
            );
        }
        res
    }

    fn invocation(&self, ws: &Path, program: &str, args: Vec<String>) -> Invocation {
        Invocation {
            program: program.into(),
            args,
            cwd: ws.to_path_buf(),
            timeout: self.limits.timeout,
        }
    }

    fn finish(&self, tool: &str, outcome: RunOutcome) -> ToolResult {
        match outcome {
            RunOutcome::Unavailable { binary } => ToolResult::unavailable(tool, &binary),
            RunOutcome::SpawnFailed(msg) => ToolResult::failure(
                tool,
                UNAVAILABLE_EXIT,
                format!("tool unavailable: spawn failed: {msg}"),
            ),
            RunOutcome::Finished(raw) => {
                let mut stderr = raw.stderr;
                let mut exit_code = raw.exit_code;
                if raw.timed_out {
                    exit_code = TIMEOUT_EXIT;
                    append_line(
                        &mut stderr,
                        &format!("timed out after {} s", self.limits.timeout.as_secs_f64()),
                    );
                }
                let (stdout, stderr, truncated) = match self.limits.output_cap {
                    Some(cap) => cap_streams(&raw.stdout, &stderr, cap),
                    None => (raw.stdout, stderr, false),
                };
                ToolResult {
                    tool_name: tool.into(),
                    exit_code,
                    stdout,
                    stderr,
                    duration_ms: raw.duration.as_millis() as u64,
                    truncated,
                    timed_out: raw.timed_out,
                }
            }
        }
    }
}

fn check_files(tool: &str, files: &[String]) -> Result<(), ToolResult> {
    if files.is_empty() {
        return Err(ToolResult::failure(
            tool,
            USAGE_EXIT,
            "precondition violation: no files given",
        ));
    }
    for f in files {
        if let Err(v) = sandbox::check_relative_path(f) {
            return Err(ToolResult::failure(
                tool,
                POLICY_EXIT,
                format!("policy violation: {v}"),
            ));
        }
    }
    Ok(())
}

fn top_flag(top: Option<&str>) -> String {
    match top {
        Some(t) => format!("-top {t}"),
        None => "-auto-top".into(),
    }
}

fn append_line(buf: &mut String, line: &str) {
    if !buf.is_empty() && !buf.ends_with('\n') {
        buf.push('\n');
    }
    buf.push_str(line);
    buf.push('\n');
}

/// Latches reported by a Yosys synthesis log: the larger of the
/// `proc_dlatch` inference messages and the `$_DLATCH_*` cell count in `stat`.
pub(crate) fn count_latches(log: &str) -> usize {
    let inferred = log.matches("Latch inferred for signal").count();
    let cell_re =
        Regex::new(r"(?m)^\s*(?:(\d+)\s+\$_DLATCH\w*|\$_DLATCH\w*\s+(\d+))").expect("static regex");
    let mut cells = 0usize;
    for caps in cell_re.captures_iter(log) {
        let n = caps
            .get(1)
            .or(caps.get(2))
            .and_then(|m| m.as_str().parse::<usize>().ok());
        cells += n.unwrap_or(0);
    }
    // `stat` may be printed more than once per design; inference messages are per signal
    inferred.max(cells)
}

pub(crate) fn has_assertions(source: &str) -> bool {
    let text = strip_comments(source);
    let re = Regex::new(r"\bassert\s*(property\b|\(|final\b)").expect("static regex");
    re.is_match(&text)
}
