//! Sweep driver: a declarative config, run scheduling, and the
//! run → judge → analyze pipeline over an output directory.
//!
//! Layout of an output root:
//!
//! ```text
//! manifest.json            resolved config + every scheduled run
//! workspaces/<run_id>/     one isolated workspace per run
//! runs/<run_id>.trace.json
//! runs/<run_id>.events.jsonl
//! outcomes.jsonl           written by judge
//! report.json, report.md   written by analyze
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    read_trace, run_agent, trace_path, AgentConfig, RunContext, RunStatus, RunTrace,
};
use crate::analytics::{
    build_report, render_report, AnalyticsError, AnalyticsReport, ReportFormat,
};
use crate::corpus::{self, CorpusError, Difficulty, Subset, TaskSpec};
use crate::evaluation::{
    judge_corpus, read_outcomes, write_outcomes, Judge, Outcome, ScheduledRun,
};
use crate::pool::parallel_map;
use crate::toolbox::{CommandRunner, ProcessRunner, StubRunner, ToolPaths};

pub const MANIFEST: &str = "manifest.json";
pub const OUTCOMES: &str = "outcomes.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
pub const RUNS_DIR: &str = "runs";
pub const WORKSPACES_DIR: &str = "workspaces";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl HarnessError {
    /// 1 for bad content, 2 for environment and IO problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Analytics(_) => 1,
            HarnessError::Corpus(
                CorpusError::Malformed { .. } | CorpusError::DuplicateId { .. },
            ) => 1,
            HarnessError::Corpus(CorpusError::Unreadable { .. })
            | HarnessError::Io { .. }
            | HarnessError::MissingInput(_) => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn one() -> usize {
    1
}

fn default_judge_timeout() -> u64 {
    120
}

/// Budgets applied to every agent that does not set its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_call_timeout_s: Option<u64>,
    /// `0` disables capping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_cap_bytes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_budget_tokens: Option<u64>,
    #[serde(default = "default_judge_timeout")]
    pub judge_timeout_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub corpus: PathBuf,
    pub output_root: PathBuf,
    #[serde(default = "one")]
    pub parallelism: usize,
    /// Binary name → executable path.
    #[serde(default)]
    pub tool_paths: BTreeMap<String, PathBuf>,
    /// JSON-lines stub rules answering tool invocations without the real
    /// binaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_stubs: Option<PathBuf>,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(rename = "agent")]
    pub agents: Vec<AgentConfig>,
}

impl HarnessConfig {
    /// Parses a TOML document. `defaults` fill in agent fields left unset;
    /// relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        if let (Some(toml::Value::Table(defaults)), Some(toml::Value::Array(agents))) =
            (doc.get("defaults").cloned(), doc.get_mut("agent"))
        {
            for agent in agents.iter_mut() {
                let Some(agent) = agent.as_table_mut() else {
                    continue;
                };
                for key in [
                    "max_turns",
                    "per_call_timeout_s",
                    "output_cap_bytes",
                    "context_budget_tokens",
                ] {
                    if let Some(v) = defaults.get(key) {
                        agent.entry(key).or_insert_with(|| v.clone());
                    }
                }
            }
        }
        let mut cfg: HarnessConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_root);
        if let Some(p) = self.tool_stubs.as_mut() {
            fix(p);
        }
        for p in self.tool_paths.values_mut() {
            fix(p);
        }
        for a in &mut self.agents {
            if let Some(p) = a.backend.script_path.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.parallelism == 0 {
            return Err(HarnessError::Config("parallelism must be >= 1".into()));
        }
        if self.agents.is_empty() {
            return Err(HarnessError::Config(
                "at least one [[agent]] is required".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for a in &self.agents {
            if !seen.insert(a.config_id.as_str()) {
                return Err(HarnessError::Config(format!(
                    "duplicate config_id `{}`",
                    a.config_id
                )));
            }
            a.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Real subprocesses, answered first by stub rules when configured.
    pub fn command_runner(&self) -> Result<Arc<dyn CommandRunner>, HarnessError> {
        let process: Arc<dyn CommandRunner> = Arc::new(ProcessRunner::new(ToolPaths {
            overrides: self.tool_paths.clone(),
        }));
        match &self.tool_stubs {
            None => Ok(process),
            Some(path) => {
                let rules = StubRunner::load_rules(path).map_err(io_err(path))?;
                Ok(Arc::new(StubRunner::new(rules, process)))
            }
        }
    }
}

/// Restricts which (task, config) pairs are scheduled.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunFilter {
    pub tasks: Option<BTreeSet<String>>,
    pub subset: Option<Subset>,
    pub difficulty: Option<Difficulty>,
    pub configs: Option<BTreeSet<String>>,
}

impl RunFilter {
    pub fn admits_task(&self, t: &TaskSpec) -> bool {
        self.tasks.as_ref().is_none_or(|ids| ids.contains(&t.id))
            && self.subset.is_none_or(|s| s == t.subset)
            && self.difficulty.is_none_or(|d| d == t.difficulty)
    }

    pub fn admits_config(&self, id: &str) -> bool {
        self.configs.as_ref().is_none_or(|ids| ids.contains(id))
    }
}

pub fn run_id(task_id: &str, config_id: &str, counter: u32) -> String {
    format!("{task_id}__{config_id}__{counter:04}")
}

/// Everything `judge` and `analyze` need to find a sweep's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_id: String,
    pub config: HarnessConfig,
    pub runs: Vec<ScheduledRun>,
}

impl Manifest {
    pub fn load(output_root: &Path) -> Result<Self, HarnessError> {
        let path = output_root.join(MANIFEST);
        if !path.is_file() {
            return Err(HarnessError::MissingInput(path));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Io {
            path: path.clone(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })
    }

    fn store(&self, output_root: &Path) -> Result<(), HarnessError> {
        let path = output_root.join(MANIFEST);
        let tmp = output_root.join(format!("{MANIFEST}.tmp"));
        let body = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(&tmp, body).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

pub fn corpus_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into())
}

/// Pairs every admitted task with every admitted agent. Counters continue
/// from runs already in `existing`, so a rerun never reuses a run id.
pub fn schedule(
    tasks: &[TaskSpec],
    agents: &[AgentConfig],
    filter: &RunFilter,
    output_root: &Path,
    existing: &[ScheduledRun],
) -> Vec<ScheduledRun> {
    let mut last: HashMap<(String, String), u32> = HashMap::new();
    for r in existing {
        let n = r
            .run_id
            .rsplit("__")
            .next()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        let e = last
            .entry((r.task_id.clone(), r.config_id.clone()))
            .or_default();
        *e = (*e).max(n);
    }
    let mut out = Vec::new();
    for task in tasks.iter().filter(|t| filter.admits_task(t)) {
        for agent in agents.iter().filter(|a| filter.admits_config(&a.config_id)) {
            let n = last
                .get(&(task.id.clone(), agent.config_id.clone()))
                .copied()
                .unwrap_or(0)
                + 1;
            let id = run_id(&task.id, &agent.config_id, n);
            out.push(ScheduledRun {
                trace_path: trace_path(&output_root.join(RUNS_DIR), &id),
                workspace: output_root.join(WORKSPACES_DIR).join(&id),
                run_id: id,
                task_id: task.id.clone(),
                config_id: agent.config_id.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: ScheduledRun,
    /// `None` when the harness itself failed before a trace existed.
    pub status: Option<RunStatus>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub records: Vec<RunRecord>,
}

impl SweepSummary {
    pub fn internal_errors(&self) -> impl Iterator<Item = (&str, &str)> {
        self.records
            .iter()
            .filter_map(|r| r.error.as_deref().map(|e| (r.run.run_id.as_str(), e)))
    }

    pub fn count(&self, status: RunStatus) -> usize {
        self.records
            .iter()
            .filter(|r| r.status == Some(status))
            .count()
    }
}

fn ensure_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))?;
    // create_dir_all succeeds on an existing read-only directory; probe it.
    let probe = path.join(".write-probe");
    fs::write(&probe, b"").map_err(io_err(path))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

/// Executes every scheduled (task, config) pair. Agent crashes are data;
/// only harness failures (workspace, trace writing) are reported as errors.
pub fn run_sweep(cfg: &HarnessConfig, filter: &RunFilter) -> Result<SweepSummary, HarnessError> {
    let tasks = corpus::load_corpus(&cfg.corpus)?;
    let root = &cfg.output_root;
    ensure_dir(root)?;
    ensure_dir(&root.join(RUNS_DIR))?;
    ensure_dir(&root.join(WORKSPACES_DIR))?;
    let runner = cfg.command_runner()?;

    let mut manifest = match Manifest::load(root) {
        Ok(m) => m,
        Err(HarnessError::MissingInput(_)) => Manifest {
            corpus_id: corpus_id(&cfg.corpus),
            config: cfg.clone(),
            runs: Vec::new(),
        },
        Err(e) => return Err(e),
    };
    let scheduled = schedule(&tasks, &cfg.agents, filter, root, &manifest.runs);
    manifest.config = cfg.clone();
    manifest.corpus_id = corpus_id(&cfg.corpus);
    manifest.runs.extend(scheduled.iter().cloned());
    manifest.store(root)?;

    let by_task: HashMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    let by_config: HashMap<&str, &AgentConfig> = cfg
        .agents
        .iter()
        .map(|a| (a.config_id.as_str(), a))
        .collect();
    let runs_dir = root.join(RUNS_DIR);
    let ws_root = root.join(WORKSPACES_DIR);

    let records = parallel_map(&scheduled, cfg.parallelism, |run| {
        let task = by_task[run.task_id.as_str()];
        let agent = by_config[run.config_id.as_str()];
        let fail = |error: String| RunRecord {
            run: run.clone(),
            status: None,
            error: Some(error),
        };
        let ws = match corpus::materialize_workspace(task, &ws_root, &run.run_id) {
            Ok(ws) => ws,
            Err(e) => return fail(e.to_string()),
        };
        let ctx = RunContext {
            run_id: &run.run_id,
            workspace: &ws,
            runner: runner.clone(),
            log_dir: Some(&runs_dir),
        };
        let trace = run_agent(task, agent, &ctx);
        if !run.trace_path.is_file() {
            return fail(format!("trace not written: {}", trace.warnings.join("; ")));
        }
        RunRecord {
            run: run.clone(),
            status: Some(trace.status),
            error: None,
        }
    });
    Ok(SweepSummary { records })
}

/// Judges every run in the manifest and writes `outcomes.jsonl`.
pub fn judge_sweep(output_root: &Path) -> Result<Vec<Outcome>, HarnessError> {
    let manifest = Manifest::load(output_root)?;
    let cfg = &manifest.config;
    let tasks = corpus::load_corpus(&cfg.corpus)?;
    let judge = Judge::new(
        cfg.command_runner()?,
        Duration::from_secs(cfg.defaults.judge_timeout_s),
    );
    let (outcomes, _) = judge_corpus(&tasks, &manifest.runs, &judge, cfg.parallelism);
    let path = output_root.join(OUTCOMES);
    write_outcomes(&path, &outcomes).map_err(io_err(&path))?;
    Ok(outcomes)
}

/// Builds the report from the manifest, traces and outcomes and writes
/// `report.json` and `report.md`.
pub fn analyze_sweep(output_root: &Path) -> Result<AnalyticsReport, HarnessError> {
    let manifest = Manifest::load(output_root)?;
    let tasks = corpus::load_corpus(&manifest.config.corpus)?;
    let outcomes_path = output_root.join(OUTCOMES);
    if !outcomes_path.is_file() {
        return Err(HarnessError::MissingInput(outcomes_path));
    }
    let outcomes = read_outcomes(&outcomes_path).map_err(io_err(&outcomes_path))?;
    let traces: Vec<RunTrace> = manifest
        .runs
        .iter()
        .filter_map(|r| read_trace(&r.trace_path).ok())
        .collect();
    let report = build_report(&manifest.corpus_id, &tasks, &traces, &outcomes, Utc::now())?;
    for (name, format) in [
        (REPORT_JSON, ReportFormat::Json),
        (REPORT_MD, ReportFormat::Markdown),
    ] {
        let path = output_root.join(name);
        fs::write(&path, render_report(&report, format)).map_err(io_err(&path))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
corpus = "corpus.jsonl"
output_root = "out"
parallelism = 2

[defaults]
max_turns = 7
output_cap_bytes = 0

[[agent]]
config_id = "base"
prompt_variant = "baseline"
catalog = "basic"
backend = { kind = "scripted", max_context_tokens = 4000, script_path = "s.jsonl" }

[[agent]]
config_id = "mod2"
prompt_variant = "structured"
catalog = "expanded"
max_turns = 30
output_cap_bytes = 4096
backend = { kind = "scripted", max_context_tokens = 4000, script_path = "/abs/s.jsonl" }
"#;

    #[test]
    fn parses_and_applies_defaults() {
        let cfg = HarnessConfig::parse(CONFIG, Path::new("/base")).unwrap();
        assert_eq!(cfg.corpus, Path::new("/base/corpus.jsonl"));
        assert_eq!(cfg.parallelism, 2);
        assert_eq!(
            (cfg.agents[0].max_turns, cfg.agents[0].output_cap_bytes),
            (7, None)
        );
        assert_eq!(
            (cfg.agents[1].max_turns, cfg.agents[1].output_cap_bytes),
            (30, Some(4096))
        );
        assert_eq!(
            cfg.agents[0].backend.script_path.as_deref(),
            Some(Path::new("/base/s.jsonl"))
        );
        assert_eq!(
            cfg.agents[1].backend.script_path.as_deref(),
            Some(Path::new("/abs/s.jsonl"))
        );
        assert_eq!(cfg.defaults.judge_timeout_s, 120);
    }

    #[test]
    fn rejects_invalid_configs() {
        let dup = CONFIG.replace("\"mod2\"", "\"base\"");
        assert!(
            matches!(HarnessConfig::parse(&dup, Path::new("/")), Err(HarnessError::Config(m)) if m.contains("duplicate"))
        );
        let zero = CONFIG.replace("parallelism = 2", "parallelism = 0");
        assert!(matches!(
            HarnessConfig::parse(&zero, Path::new("/")),
            Err(HarnessError::Config(_))
        ));
        let pairing = CONFIG.replace("catalog = \"expanded\"", "catalog = \"empty\"");
        assert!(matches!(
            HarnessConfig::parse(&pairing, Path::new("/")),
            Err(HarnessError::Config(_))
        ));
        let unknown = format!("bogus = 1\n{CONFIG}");
        assert!(HarnessConfig::parse(&unknown, Path::new("/")).is_err());
        let none = "corpus = \"c\"\noutput_root = \"o\"\nagent = []\n";
        assert!(matches!(
            HarnessConfig::parse(none, Path::new("/")),
            Err(HarnessError::Config(_))
        ));
    }

    fn task(id: &str, subset: &str, difficulty: &str) -> TaskSpec {
        let record = serde_json::json!({
            "id": id, "subset": subset, "difficulty": difficulty, "category": "c", "prompt": "p",
            "context_files": {"verif/tb.sv": "x"},
            "harness": {"kind": "testbench", "tb_files": ["verif/tb.sv"], "pass_token": "PASS", "target_files": ["rtl/a.sv"]},
        });
        corpus::parse_corpus(&record.to_string()).unwrap().remove(0)
    }

    #[test]
    fn scheduling_filters_and_counters() {
        let cfg = HarnessConfig::parse(CONFIG, Path::new("/b")).unwrap();
        let tasks = vec![
            task("t1", "agentic", "easy"),
            task("t2", "non_agentic", "hard"),
        ];
        let root = Path::new("/out");
        let all = schedule(&tasks, &cfg.agents, &RunFilter::default(), root, &[]);
        let ids: Vec<&str> = all.iter().map(|r| r.run_id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "t1__base__0001",
                "t1__mod2__0001",
                "t2__base__0001",
                "t2__mod2__0001"
            ]
        );
        assert_eq!(
            all[0].trace_path,
            Path::new("/out/runs/t1__base__0001.trace.json")
        );
        assert_eq!(
            all[0].workspace,
            Path::new("/out/workspaces/t1__base__0001")
        );

        let again = schedule(&tasks, &cfg.agents, &RunFilter::default(), root, &all);
        assert_eq!(again[3].run_id, "t2__mod2__0002");

        let hard = RunFilter {
            difficulty: Some(Difficulty::Hard),
            ..Default::default()
        };
        assert_eq!(schedule(&tasks, &cfg.agents, &hard, root, &[]).len(), 2);
        let one = RunFilter {
            tasks: Some(BTreeSet::from(["t1".to_string()])),
            configs: Some(BTreeSet::from(["mod2".to_string()])),
            ..Default::default()
        };
        assert_eq!(schedule(&tasks, &cfg.agents, &one, root, &[]).len(), 1);
        let agentic = RunFilter {
            subset: Some(Subset::Agentic),
            ..Default::default()
        };
        assert!(schedule(&tasks, &cfg.agents, &agentic, root, &[])
            .iter()
            .all(|r| r.task_id == "t1"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 1);
        assert_eq!(HarnessError::MissingInput("x".into()).exit_code(), 2);
    }
}
