use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rtlagent"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/binary_to_gray")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, output_root: &str) -> PathBuf {
    let text = format!(
        r#"corpus = {corpus:?}
output_root = {output_root:?}
tool_stubs = {stubs:?}

[[agent]]
config_id = "mod2"
prompt_variant = "structured"
catalog = "expanded"
backend = {{ kind = "scripted", max_context_tokens = 200000, script_path = {script:?} }}
"#,
        corpus = fixture("corpus.jsonl"),
        stubs = fixture("stubs.jsonl"),
        script = fixture("structured_session.jsonl"),
    );
    let path = dir.join("harness.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_clean_corpus() {
    let o = bin()
        .arg("validate")
        .arg(fixture("corpus.jsonl"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 tasks, no issues"));
}

#[test]
fn validate_reports_traversal_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("corpus.jsonl")).unwrap();
    let mut rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    rec["context_files"]["../escape.sv"] = "module m; endmodule".into();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, format!("{rec}\n")).unwrap();
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1, "one issue per line: {out}");
    assert!(out.contains("path traversal") && out.contains("../escape.sv"));
}

#[test]
fn validate_missing_file_exits_2() {
    let o = bin()
        .args(["validate", "/nonexistent/corpus.jsonl"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read corpus"));
}

#[test]
fn validate_malformed_record_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, "{\"id\": 3}\n").unwrap();
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("harness.toml");
    fs::write(
        &path,
        "corpus = \"c.jsonl\"\noutput_root = \"out\"\nbogus = 1\n[[agent]]\n",
    )
    .unwrap();
    let o = bin()
        .arg("run")
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("invalid config"));
}

#[test]
fn run_judge_analyze_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out");

    let o = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("binary_to_gray__mod2__0001\tcompleted"));

    let o = bin()
        .arg("judge")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("binary_to_gray__mod2__0001\tnone"));

    let root = dir.path().join("out");
    let o = bin()
        .arg("analyze")
        .arg("--root")
        .arg(&root)
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["metadata"]["n_runs"], 1);
    assert!(root.join("report.md").is_file());

    let o = bin()
        .arg("analyze")
        .arg("--root")
        .arg(&root)
        .output()
        .unwrap();
    assert!(stdout(&o).contains("Agent completion and crash rate"));

    let trace = root.join("runs/binary_to_gray__mod2__0001.trace.json");
    let o = bin().arg("replay").arg(&trace).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).trim_end().ends_with("task_complete called."),
        "{}",
        stdout(&o)
    );

    // A second sweep continues the run counter.
    let o = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert!(stdout(&o).contains("binary_to_gray__mod2__0002"));
}

#[test]
fn empty_filter_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out");
    let o = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .args(["--difficulty", "hard"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("selected no runs"));
}

#[test]
fn unwritable_output_root_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let cfg = write_config(dir.path(), "file/out");
    let o = bin().arg("run").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn analyze_before_judge_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "out");
    assert!(bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap()
        .success());
    let o = bin()
        .arg("analyze")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outcomes.jsonl"));
}

#[test]
fn replay_missing_trace_exits_2() {
    let o = bin()
        .args(["replay", "/nonexistent/x.trace.json"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
