use std::fmt::Write as _;

use super::{check_pairing, AgentError, PromptVariant};
use crate::corpus::TaskSpec;
use crate::toolbox::{ArgType, Catalog, ToolSpec, SHELL_EXEC, TASK_COMPLETE};

pub const BASELINE_PROMPT: &str = r#"You are a language model that has the following file operations available at your disposal:

  - List files in a directory by running one of the following commands:
      - `ls`
      - `tree`

  - Read files by using:
      - `cat <filename>`

  - Write files by using:
      - `echo <content> > <filename>`

  - Compile Verilog by using `iverilog`, such as:
      - `iverilog -o <output_filename>.out -g2012 <verilog_code_file> <verilog_testbench_file>`

  - Run simulation by using:
      - `vvp <output_filename>.out`

  - Find the current working directory by using:
      - `pwd`

  - Update the contents of a text file from old content to new content:
      - `sed -i "problematic_line_number s/problematic_statement/non_problematic_statement/" Buggy_RTL_code.sv`

  - Access a specific line of a file:
      - `awk 'NR==line_number' file_name.sv`

You will be given a prompt, and your task is to understand it and solve the issue by using the above commands as needed. In the final step, you should create a Linux patch to highlight the necessary file updates to achieve the targeted goal.

You will solve the problem step by step using the following structure:

  - thought (the reasoning process for the step you are going to take)
  - action (the command you will run)
  - observation (the output from the action)

The last step will contain the final output summary and the patch itself in the following format:

  - thought (a summary of what you did and an introduction to the patch file)
  - patch (a Linux-based patch that needs to be applied to reach the relevant solution)"#;

pub const STRUCTURED_PROMPT: &str = r#"You are a Verilog hardware design assistant. Your task is to analyze, debug, or generate
Verilog/SystemVerilog code based on a given prompt.

You MUST follow this exact sequence of steps, do not skip or reorder them:

STEP 1: Discover and read all files
Run `ls -R` to list every file in the working directory. Then use `cat <filename>` to read
EVERY file you find (source files, testbenches, specs, READMEs, etc.). Do not proceed until
you have read all files in full.

STEP 2: Plan your changes
Think carefully about what edits or new files are required to satisfy the prompt.
Write out your plan explicitly before touching any file.
IMPORTANT: stay strictly within what the prompt and the files specify.
Do NOT infer extra requirements, add unrequested features, or change anything not directly
called for by the prompt or the existing specifications.

STEP 3: Apply changes
Implement your plan from Step 2 by modifying or creating files with Linux commands
(`sed`, `echo`, `awk`, `tee`, `cp`, `mv`, etc.).
Make only the changes you planned in Step 2.

STEP 4: Verify your implementation
Run all applicable verification tools in this order. Each tool targets different bug classes;
use ALL of them, not just the first one that passes:

  4a. `iverilog_compile`: confirms the RTL is syntactically valid.
  4b. `verilator_lint`: catches semantic issues iverilog misses.
  4c. `yosys_lint`: catches structural issues such as undriven outputs and port mismatches.
  4d. `yosys_synth`: catches synthesis-time issues including unintended latches.
  4e. `get_module_ports`: confirms port names, directions, and widths match the spec.
  4f. `formal_verify`: if assertions are present, run bounded model checking.

CRITICAL: Ignore warnings in pre-existing files you did NOT modify.
If any tool reports an error in your changed files, return to Step 2 and revise.

STEP 5: Signal completion
Once all applicable tools pass, call `task_complete` with a brief summary.
Do not call `task_complete` before a successful `iverilog_compile`.

At each step, structure your reasoning as:
  - thought     : what you are about to do and why
  - action      : the tool call / command
  - observation : the result"#;

/// Tool-role message sent in place of a premature completion signal.
pub const GATE_REMINDER: &str =
    "task_complete rejected: Do not call `task_complete` before a successful `iverilog_compile`. \
Compile your RTL with iverilog_compile, fix any errors, then signal completion again.";

const SINGLE_PASS_INSTRUCTIONS: &str = "Solve the task below in a single response. No tools are available and there \
will be no follow-up turns, so give your complete answer now.

Write every file you create or change in full, each in its own fenced block whose info string is `file:` followed by \
the file's relative path, for example:

```file:rtl/example.sv
module example(input logic a, output logic y);
  assign y = a;
endmodule
```

Alternatively, give a unified diff in a single fenced block with the info string `patch`.";

/// System prompt for a variant/catalog pair: the variant's fixed text
/// followed by a tool section generated from the catalog.
pub fn render_system_prompt(
    variant: PromptVariant,
    catalog: Catalog,
) -> Result<String, AgentError> {
    check_pairing(variant, catalog)?;
    Ok(match variant {
        PromptVariant::None => SINGLE_PASS_INSTRUCTIONS.to_string(),
        PromptVariant::Baseline => format!(
            "{BASELINE_PROMPT}\n\n{}",
            tool_section(variant, &catalog.specs())
        ),
        PromptVariant::Structured => format!(
            "{STRUCTURED_PROMPT}\n\n{}",
            tool_section(variant, &catalog.specs())
        ),
    })
}

/// First user message. In single-pass mode every context file is inlined,
/// since the model cannot look at the workspace.
pub fn render_user_prompt(task: &TaskSpec, variant: PromptVariant) -> String {
    if variant != PromptVariant::None || task.context_files.is_empty() {
        return task.prompt.clone();
    }
    let mut out = task.prompt.clone();
    out.push_str("\n\nContext files:\n");
    for (path, content) in &task.context_files {
        let fence = fence_for(content);
        let _ = write!(out, "\n{path}:\n{fence}\n{content}");
        if !content.ends_with('\n') {
            out.push('\n');
        }
        let _ = writeln!(out, "{fence}");
    }
    out
}

/// A backtick fence longer than any backtick run inside `content`.
fn fence_for(content: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in content.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat(longest.max(2) + 1)
}

fn usage_body(spec: &ToolSpec) -> String {
    match spec.name.as_str() {
        SHELL_EXEC => "<command line>".into(),
        TASK_COMPLETE => "<brief summary>".into(),
        _ => spec
            .arg_schema
            .iter()
            .map(|a| {
                let hint = match a.kind {
                    ArgType::PathList => "<path> <path> ...",
                    ArgType::Path => "<path>",
                    ArgType::Integer => "<integer>",
                    ArgType::ModuleName => "<module name>",
                    ArgType::Text => "<text>",
                };
                let opt = if a.required { "" } else { "   (optional)" };
                format!("{}: {hint}{opt}", a.name)
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn tool_section(variant: PromptVariant, specs: &[ToolSpec]) -> String {
    let mut s = String::from(
        "TOOLS\n\nTo run a tool, write a fenced code block whose info string is the tool name. \
The block body holds the arguments: the command line for `shell_exec`, the summary for `task_complete`, \
and one `name: value` line per argument for the other tools. Blocks run in the order written and each \
result comes back as an observation. Paths are relative to the working directory.\n",
    );
    for spec in specs {
        let _ = write!(
            s,
            "\n- `{}`: {}\n```{}\n{}\n```\n",
            spec.name,
            spec.description,
            spec.name,
            usage_body(spec)
        );
    }
    if variant == PromptVariant::Baseline {
        s.push_str(
            "\nA fenced block without an info string directly after an `action` label is run as a shell command. \
Finish either with a fenced block whose info string is `patch` containing a unified diff against the \
working directory, or by editing the files directly and calling `task_complete`.\n",
        );
    }
    s
}
