#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rtlagent_core::agent::{run_agent, AgentConfig, PromptVariant, RunContext, RunTrace};
use rtlagent_core::corpus::{load_corpus, materialize_workspace, TaskSpec};
use rtlagent_core::llm::BackendConfig;
use rtlagent_core::toolbox::{Catalog, CommandRunner, ProcessRunner, StubRunner};

pub const TASK_ID: &str = "binary_to_gray";
pub const TARGET: &str = "rtl/binary_to_gray.sv";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn btg(name: &str) -> PathBuf {
    fixtures().join("binary_to_gray").join(name)
}

pub fn btg_task() -> TaskSpec {
    load_corpus(&btg("corpus.jsonl"))
        .expect("fixture corpus loads")
        .remove(0)
}

/// Stub rules in front of real subprocesses (the shell still runs for real).
pub fn stub_runner(rules_file: &str) -> Arc<dyn CommandRunner> {
    let rules = StubRunner::load_rules(&btg(rules_file)).expect("stub rules load");
    Arc::new(StubRunner::new(rules, Arc::new(ProcessRunner::default())))
}

pub fn agent(
    config_id: &str,
    variant: PromptVariant,
    catalog: Catalog,
    script: &str,
    max_context: u64,
) -> AgentConfig {
    AgentConfig::new(
        config_id,
        variant,
        catalog,
        BackendConfig::scripted(btg(script), max_context),
    )
}

pub struct Session {
    pub trace: RunTrace,
    pub workspace: PathBuf,
    pub trace_path: PathBuf,
}

/// Materializes `task` under `root/workspaces` and runs `config` against it,
/// logging under `root/runs`.
pub fn run_session(
    root: &Path,
    task: &TaskSpec,
    config: &AgentConfig,
    runner: Arc<dyn CommandRunner>,
    run_id: &str,
) -> Session {
    let ws_root = root.join("workspaces");
    let runs = root.join("runs");
    std::fs::create_dir_all(&ws_root).unwrap();
    let workspace = materialize_workspace(task, &ws_root, run_id).expect("workspace");
    let ctx = RunContext {
        run_id,
        workspace: &workspace,
        runner,
        log_dir: Some(&runs),
    };
    let trace = run_agent(task, config, &ctx);
    let trace_path = rtlagent_core::agent::trace_path(&runs, run_id);
    Session {
        trace,
        workspace,
        trace_path,
    }
}
