//! Benchmark task corpus: loading, validation, and per-run workspaces.
//!
//! A corpus is a line-delimited JSON file, one task per line, with every
//! context file embedded as text. Blank lines are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Agentic,
    NonAgentic,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::Agentic => "agentic",
            Subset::NonAgentic => "non_agentic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnessKind {
    Testbench,
    GoldenCompare,
}

/// How a finished workspace is judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalHarness {
    pub kind: HarnessKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tb_files: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub pass_token: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub golden_files: BTreeMap<String, String>,
    #[serde(default)]
    pub target_files: Vec<String>,
}

/// One benchmark problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub subset: Subset,
    pub difficulty: Difficulty,
    pub category: String,
    pub prompt: String,
    #[serde(default)]
    pub context_files: BTreeMap<String, String>,
    pub harness: EvalHarness,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: malformed record at `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate task id `{id}`")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("workspace {0} already exists")]
    Collision(PathBuf),
    #[error("context path `{0}` escapes the workspace")]
    UnsafePath(String),
    #[error("cannot write workspace {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A violated task invariant. `field` names the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub task_id: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.task_id, self.field, self.message)
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<TaskSpec>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<TaskSpec>, CorpusError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let task = parse_record(line, lineno)?;
        if !seen.insert(task.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: lineno,
                id: task.id,
            });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

fn parse_record(line: &str, lineno: usize) -> Result<TaskSpec, CorpusError> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let message = err.inner().to_string();
        let field = missing_field_name(&message)
            .map(|name| {
                if path == "." {
                    name
                } else {
                    format!("{path}.{name}")
                }
            })
            .unwrap_or(path);
        CorpusError::Malformed {
            line: lineno,
            field,
            message,
        }
    })
}

fn missing_field_name(message: &str) -> Option<String> {
    let rest = message.strip_prefix("missing field `")?;
    Some(rest.split('`').next()?.to_string())
}

/// Inverse of [`load_corpus`]: one compact JSON object per line.
pub fn serialize_corpus(tasks: &[TaskSpec]) -> String {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&serde_json::to_string(task).expect("task serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, tasks: &[TaskSpec]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(serialize_corpus(tasks).as_bytes())
}

pub fn validate_task(task: &TaskSpec) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |field: &str, message: String| {
        issues.push(ValidationIssue {
            task_id: task.id.clone(),
            field: field.to_string(),
            message,
        })
    };
    if task.id.trim().is_empty() {
        push("id", "task id is empty".into());
    }
    for path in task.context_files.keys() {
        if path.is_empty() {
            push("context_files", "empty context file path".into());
        } else if sandbox::has_traversal(path) {
            push(
                "context_files",
                format!("path traversal in context file `{path}`"),
            );
        }
    }
    let h = &task.harness;
    match h.kind {
        HarnessKind::Testbench => {
            if h.tb_files.is_empty() {
                push(
                    "harness.tb_files",
                    "testbench harness has no tb_files".into(),
                );
            }
            if h.pass_token.is_empty() {
                push(
                    "harness.pass_token",
                    "testbench harness has an empty pass_token".into(),
                );
            }
        }
        HarnessKind::GoldenCompare => {
            if h.golden_files.is_empty() {
                push(
                    "harness.golden_files",
                    "golden_compare harness has no golden_files".into(),
                );
            }
        }
    }
    if task.subset == Subset::Agentic && h.target_files.is_empty() {
        push(
            "harness.target_files",
            "agentic task lists no target_files".into(),
        );
    }
    let harness_paths = h
        .tb_files
        .iter()
        .chain(h.target_files.iter())
        .chain(h.golden_files.keys());
    for path in harness_paths {
        if sandbox::has_traversal(path) {
            push(
                "harness",
                format!("path traversal in harness path `{path}`"),
            );
        }
    }
    issues
}

/// Validates every task plus corpus-level uniqueness.
pub fn validate_corpus(tasks: &[TaskSpec]) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for task in tasks {
        if !seen.insert(task.id.as_str()) {
            issues.push(ValidationIssue {
                task_id: task.id.clone(),
                field: "id".into(),
                message: "duplicate task id".into(),
            });
        }
        issues.extend(validate_task(task));
    }
    issues
}

/// Creates `root/run_id` and writes the task's context files into it.
///
/// Parent directories of the harness target files are created empty so the
/// agent discovers where its output belongs. The prompt is not written.
pub fn materialize_workspace(
    task: &TaskSpec,
    root: &Path,
    run_id: &str,
) -> Result<PathBuf, WorkspaceError> {
    if sandbox::check_relative_path(run_id).is_err() || run_id.contains('/') {
        return Err(WorkspaceError::UnsafePath(run_id.to_string()));
    }
    for path in task
        .context_files
        .keys()
        .chain(task.harness.target_files.iter())
    {
        if path.is_empty() || sandbox::has_traversal(path) {
            return Err(WorkspaceError::UnsafePath(path.clone()));
        }
    }
    let ws = root.join(run_id);
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| WorkspaceError::Write { path, source }
    };
    match fs::create_dir(&ws) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
            return Err(WorkspaceError::Collision(ws))
        }
        Err(e) => return Err(write_err(&ws)(e)),
    }
    for (rel, content) in &task.context_files {
        let dest = ws.join(rel);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(write_err(parent))?;
        }
        fs::write(&dest, content).map_err(write_err(&dest))?;
    }
    for rel in &task.harness.target_files {
        if let Some(parent) = Path::new(rel).parent() {
            if !parent.as_os_str().is_empty() {
                let dir = ws.join(parent);
                fs::create_dir_all(&dir).map_err(write_err(&dir))?;
            }
        }
    }
    ws.canonicalize().map_err(write_err(&ws))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str) -> TaskSpec {
        TaskSpec {
            id: id.into(),
            subset: Subset::Agentic,
            difficulty: Difficulty::Easy,
            category: "code-generation".into(),
            prompt: "do it".into(),
            context_files: BTreeMap::from([("docs/specs.md".to_string(), "spec".to_string())]),
            harness: EvalHarness {
                kind: HarnessKind::Testbench,
                tb_files: vec!["verif/tb.sv".into()],
                pass_token: "PASS".into(),
                golden_files: BTreeMap::new(),
                target_files: vec!["rtl/top.sv".into()],
            },
        }
    }

    #[test]
    fn empty_corpus() {
        assert!(parse_corpus("").unwrap().is_empty());
        assert!(parse_corpus("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = serialize_corpus(&[task("t1"), task("t1")]);
        match parse_corpus(&text) {
            Err(CorpusError::DuplicateId { line, id }) => {
                assert_eq!(id, "t1");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_reports_line_and_field() {
        let good = serialize_corpus(&[task("a")]);
        let bad = r#"{"id":"b","subset":"agentic","difficulty":"extreme","category":"x","prompt":"p","harness":{"kind":"testbench"}}"#;
        let text = format!("{good}{bad}\n");
        match parse_corpus(&text) {
            Err(CorpusError::Malformed { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "difficulty");
            }
            other => panic!("unexpected {other:?}"),
        }
        let missing = r#"{"id":"b","subset":"agentic","difficulty":"easy","category":"x","harness":{"kind":"testbench"}}"#;
        match parse_corpus(missing) {
            Err(CorpusError::Malformed { line, field, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(field, "prompt");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_issues() {
        assert!(validate_task(&task("ok")).is_empty());

        let mut t = task("trav");
        t.context_files.insert("../escape.sv".into(), "x".into());
        let issues = validate_task(&t);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "context_files");
        assert!(issues[0].message.contains("traversal"));

        let mut t = task("tok");
        t.harness.pass_token.clear();
        let issues = validate_task(&t);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "harness.pass_token");

        let mut t = task("gold");
        t.harness.kind = HarnessKind::GoldenCompare;
        let fields: Vec<_> = validate_task(&t).into_iter().map(|i| i.field).collect();
        assert_eq!(fields, vec!["harness.golden_files"]);

        let mut t = task("");
        t.harness.target_files.clear();
        let fields: Vec<_> = validate_task(&t).into_iter().map(|i| i.field).collect();
        assert_eq!(fields, vec!["id", "harness.target_files"]);
    }

    #[test]
    fn workspace_layout() {
        let root = tempfile::tempdir().unwrap();
        let mut t = task("nest");
        t.context_files
            .insert("a/b/c.sv".into(), "module c; endmodule\n".into());
        let ws = materialize_workspace(&t, root.path(), "run0").unwrap();
        assert!(ws.is_absolute());
        assert_eq!(
            fs::read_to_string(ws.join("a/b/c.sv")).unwrap(),
            "module c; endmodule\n"
        );
        assert!(ws.join("rtl").is_dir());
        assert!(!ws.join("rtl/top.sv").exists());

        let err = materialize_workspace(&t, root.path(), "run0").unwrap_err();
        assert!(matches!(err, WorkspaceError::Collision(_)));
    }

    #[test]
    fn empty_context_gives_empty_workspace() {
        let root = tempfile::tempdir().unwrap();
        let mut t = task("empty");
        t.context_files.clear();
        t.harness.target_files.clear();
        let ws = materialize_workspace(&t, root.path(), "r").unwrap();
        assert_eq!(fs::read_dir(ws).unwrap().count(), 0);
    }

    #[test]
    fn traversal_refused_at_materialization() {
        let root = tempfile::tempdir().unwrap();
        let mut t = task("bad");
        t.context_files.insert("../x".into(), "x".into());
        assert!(matches!(
            materialize_workspace(&t, root.path(), "r"),
            Err(WorkspaceError::UnsafePath(_))
        ));
    }
}
