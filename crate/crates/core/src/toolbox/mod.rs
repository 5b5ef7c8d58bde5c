//! Agent tools: sandboxed shell, EDA wrappers, port extraction and the
//! completion signal.

mod eda;
pub mod ports;
pub mod runner;
mod truncate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use eda::{Limits, Toolbox, BUILD_DIR, HARNESS_DIR};
pub use ports::{parse_module_ports, Direction, PortError, PortInfo};
pub use runner::{
    CommandRunner, Invocation, ProcessRunner, RawOutput, RunOutcome, StubRule, StubRunner,
    ToolPaths,
};
pub use truncate::{cap_streams, truncate_output, MIN_OUTPUT_CAP};

/// Exit code reported when a call exceeds its wall-clock limit.
pub const TIMEOUT_EXIT: i32 = 124;
/// Exit code for commands refused by the workspace policy.
pub const POLICY_EXIT: i32 = 126;
/// Exit code when the underlying binary is not installed.
pub const UNAVAILABLE_EXIT: i32 = 127;
/// Exit code for malformed tool arguments.
pub const USAGE_EXIT: i32 = 2;

pub const DEFAULT_TIMEOUT_S: u64 = 60;
pub const DEFAULT_OUTPUT_CAP: usize = 8192;

pub const SHELL_EXEC: &str = "shell_exec";
pub const IVERILOG_COMPILE: &str = "iverilog_compile";
pub const VVP_SIMULATE: &str = "vvp_simulate";
pub const VERILATOR_LINT: &str = "verilator_lint";
pub const YOSYS_LINT: &str = "yosys_lint";
pub const YOSYS_SYNTH: &str = "yosys_synth";
pub const GET_MODULE_PORTS: &str = "get_module_ports";
pub const FORMAL_VERIFY: &str = "formal_verify";
pub const TASK_COMPLETE: &str = "task_complete";

/// Every tool name the harness knows, in catalog order.
pub const ALL_TOOLS: &[&str] = &[
    SHELL_EXEC,
    IVERILOG_COMPILE,
    VVP_SIMULATE,
    VERILATOR_LINT,
    YOSYS_LINT,
    YOSYS_SYNTH,
    GET_MODULE_PORTS,
    FORMAL_VERIFY,
    TASK_COMPLETE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    Text,
    Path,
    PathList,
    Integer,
    ModuleName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgType,
    pub required: bool,
}

/// A tool as presented to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub arg_schema: Vec<ArgSpec>,
}

impl ToolSpec {
    fn new(name: &str, description: &str, args: &[(&str, ArgType, bool)]) -> Self {
        ToolSpec {
            name: name.into(),
            description: description.into(),
            arg_schema: args
                .iter()
                .map(|(n, k, r)| ArgSpec {
                    name: (*n).into(),
                    kind: *k,
                    required: *r,
                })
                .collect(),
        }
    }
}

/// Which tool set the agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Catalog {
    /// Shell plus Icarus compile/simulate and the completion signal.
    Basic,
    /// Basic plus Verilator, Yosys, port extraction and formal checking.
    Expanded,
    /// No tools at all (single-pass settings).
    Empty,
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Catalog::Basic => "basic",
            Catalog::Expanded => "expanded",
            Catalog::Empty => "empty",
        })
    }
}

impl Catalog {
    pub fn tool_names(self) -> &'static [&'static str] {
        match self {
            Catalog::Basic => &[SHELL_EXEC, IVERILOG_COMPILE, VVP_SIMULATE, TASK_COMPLETE],
            Catalog::Expanded => ALL_TOOLS,
            Catalog::Empty => &[],
        }
    }

    pub fn specs(self) -> Vec<ToolSpec> {
        self.tool_names()
            .iter()
            .map(|n| tool_spec(n).expect("known tool"))
            .collect()
    }

    pub fn contains(self, name: &str) -> bool {
        self.tool_names().contains(&name)
    }
}

pub fn tool_spec(name: &str) -> Option<ToolSpec> {
    use ArgType::*;
    let spec = match name {
        SHELL_EXEC => ToolSpec::new(
            SHELL_EXEC,
            "Run a shell command in the working directory (ls, cat, echo, sed, awk, tee, cp, mv, iverilog, vvp, ...). Paths must stay inside the working directory.",
            &[("command", Text, true)],
        ),
        IVERILOG_COMPILE => ToolSpec::new(
            IVERILOG_COMPILE,
            "Compile Verilog/SystemVerilog files with Icarus Verilog (-g2012). Confirms the RTL is syntactically valid.",
            &[("files", PathList, true), ("out", Path, false)],
        ),
        VVP_SIMULATE => ToolSpec::new(
            VVP_SIMULATE,
            "Run a simulation binary produced by iverilog_compile and return the transcript.",
            &[("out", Path, false)],
        ),
        VERILATOR_LINT => ToolSpec::new(
            VERILATOR_LINT,
            "Lint files with Verilator in lint-only mode. Catches semantic issues iverilog misses.",
            &[("files", PathList, true)],
        ),
        YOSYS_LINT => ToolSpec::new(
            YOSYS_LINT,
            "Structural check with Yosys: undriven outputs, port mismatches.",
            &[("files", PathList, true), ("top", ModuleName, false)],
        ),
        YOSYS_SYNTH => ToolSpec::new(
            YOSYS_SYNTH,
            "Generic synthesis with Yosys; reports inferred latches.",
            &[("files", PathList, true), ("top", ModuleName, false)],
        ),
        GET_MODULE_PORTS => ToolSpec::new(
            GET_MODULE_PORTS,
            "List port names, directions and widths of the first module in a file.",
            &[("file", Path, true)],
        ),
        FORMAL_VERIFY => ToolSpec::new(
            FORMAL_VERIFY,
            "Bounded model checking of assertions in the design (not applicable when no assertions are present).",
            &[("files", PathList, true), ("depth", Integer, false), ("top", ModuleName, false)],
        ),
        TASK_COMPLETE => ToolSpec::new(
            TASK_COMPLETE,
            "Signal that the task is finished, with a brief summary.",
            &[("summary", Text, false)],
        ),
        _ => return None,
    };
    Some(spec)
}

/// Outcome of one tool execution, as fed back to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_name: String,
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
    pub truncated: bool,
    pub timed_out: bool,
}

impl ToolResult {
    pub fn ok(tool: &str, stdout: impl Into<String>) -> Self {
        ToolResult {
            tool_name: tool.into(),
            exit_code: 0,
            stdout: stdout.into(),
            stderr: String::new(),
            duration_ms: 0,
            truncated: false,
            timed_out: false,
        }
    }

    pub fn failure(tool: &str, exit_code: i32, stderr: impl Into<String>) -> Self {
        ToolResult {
            tool_name: tool.into(),
            exit_code,
            stdout: String::new(),
            stderr: stderr.into(),
            duration_ms: 0,
            truncated: false,
            timed_out: false,
        }
    }

    pub fn unavailable(tool: &str, binary: &str) -> Self {
        Self::failure(
            tool,
            UNAVAILABLE_EXIT,
            format!("tool unavailable: `{binary}` is not installed on this host; this check cannot run here"),
        )
    }

    pub fn success(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }

    /// Text shown to the model as the observation for this call.
    pub fn observation(&self) -> String {
        let mut out = format!("[{}] exit={}", self.tool_name, self.exit_code);
        if self.timed_out {
            out.push_str(" (timed out)");
        }
        if self.truncated {
            out.push_str(" (output truncated)");
        }
        out.push('\n');
        if !self.stdout.is_empty() {
            out.push_str(&self.stdout);
            if !self.stdout.ends_with('\n') {
                out.push('\n');
            }
        }
        if !self.stderr.is_empty() {
            out.push_str("stderr:\n");
            out.push_str(&self.stderr);
            if !self.stderr.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

/// Terminal marker produced by `task_complete`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionMarker {
    pub summary: String,
    pub empty_summary: bool,
}

pub fn task_complete(summary: &str) -> CompletionMarker {
    let summary = summary.trim().to_string();
    CompletionMarker {
        empty_summary: summary.is_empty(),
        summary,
    }
}
