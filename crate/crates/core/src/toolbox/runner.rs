//! Subprocess execution behind a trait so EDA calls can be stubbed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Per-stream read limit; anything beyond is discarded before capping.
const READ_LIMIT: usize = 32 * 1024 * 1024;

/// One subprocess request. `program` is a logical binary name (`sh`,
/// `iverilog`, `vvp`, `verilator`, `yosys`, `yosys-smtbmc`), resolved by the
/// runner.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub program: String,
    pub args: Vec<String>,
    pub cwd: PathBuf,
    pub timeout: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct RawOutput {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub duration: Duration,
}

#[derive(Debug, Clone)]
pub enum RunOutcome {
    Finished(RawOutput),
    Unavailable { binary: String },
    SpawnFailed(String),
}

pub trait CommandRunner: Send + Sync {
    fn run(&self, inv: &Invocation) -> RunOutcome;
}

/// Binary locations: `HARNESS_TOOL_PATH_<NAME>` first, then configured
/// overrides, then `PATH`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPaths {
    #[serde(default)]
    pub overrides: BTreeMap<String, PathBuf>,
}

impl ToolPaths {
    pub fn env_var(name: &str) -> String {
        format!(
            "HARNESS_TOOL_PATH_{}",
            name.to_ascii_uppercase().replace(['-', '.'], "_")
        )
    }

    pub fn resolve(&self, name: &str) -> Option<PathBuf> {
        if let Some(p) = std::env::var_os(Self::env_var(name)) {
            let p = PathBuf::from(p);
            return is_executable(&p).then_some(p);
        }
        if let Some(p) = self.overrides.get(name) {
            return is_executable(p).then(|| p.clone());
        }
        which::which(name).ok()
    }
}

fn is_executable(p: &Path) -> bool {
    use std::os::unix::fs::PermissionsExt;
    fs::metadata(p)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

/// Runs real subprocesses in their own process group with a scrubbed
/// environment; on timeout the whole group is killed.
#[derive(Debug, Clone, Default)]
pub struct ProcessRunner {
    pub paths: ToolPaths,
}

impl ProcessRunner {
    pub fn new(paths: ToolPaths) -> Self {
        ProcessRunner { paths }
    }
}

impl CommandRunner for ProcessRunner {
    fn run(&self, inv: &Invocation) -> RunOutcome {
        let Some(bin) = self.paths.resolve(&inv.program) else {
            return RunOutcome::Unavailable {
                binary: inv.program.clone(),
            };
        };
        let mut cmd = Command::new(&bin);
        cmd.args(&inv.args)
            .current_dir(&inv.cwd)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", &inv.cwd)
            .env("LANG", "C")
            .env("TERM", "dumb")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        let start = Instant::now();
        let child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return RunOutcome::SpawnFailed(format!("{}: {e}", bin.display())),
        };
        match wait_with_timeout(child, inv.timeout) {
            Ok((status, stdout, stderr, timed_out)) => RunOutcome::Finished(RawOutput {
                exit_code: status,
                stdout,
                stderr,
                timed_out,
                duration: start.elapsed(),
            }),
            Err(e) => RunOutcome::SpawnFailed(e.to_string()),
        }
    }
}

fn reader<R: Read + Send + 'static>(mut src: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match src.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if buf.len() < READ_LIMIT {
                        buf.extend_from_slice(&chunk[..n]);
                    }
                }
            }
        }
        buf
    })
}

fn wait_with_timeout(
    mut child: Child,
    timeout: Duration,
) -> io::Result<(i32, String, String, bool)> {
    let out = reader(child.stdout.take().expect("piped stdout"));
    let err = reader(child.stderr.take().expect("piped stderr"));
    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            timed_out = true;
            // SAFETY: the child leads its own process group (process_group(0)).
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            break child.wait()?;
        }
        thread::sleep(Duration::from_millis(5));
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let code = status.code().unwrap_or(-1);
    Ok((
        code,
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
        timed_out,
    ))
}

/// Condition on workspace content for a stub rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileNeedle {
    pub path: String,
    pub text: String,
}

/// A canned result for a binary. The first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubRule {
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args_contain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_contains: Option<FileNeedle>,
    #[serde(default)]
    pub exit_code: i32,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub timed_out: bool,
    /// Touch the file named by the invocation's `-o` argument, standing in
    /// for a compiler's output artifact.
    #[serde(default)]
    pub creates_output: bool,
}

impl StubRule {
    fn matches(&self, inv: &Invocation) -> bool {
        if self.program != inv.program {
            return false;
        }
        if let Some(needle) = &self.args_contain {
            if !inv.args.iter().any(|a| a.contains(needle.as_str())) {
                return false;
            }
        }
        if let Some(fc) = &self.file_contains {
            let found = fs::read_to_string(inv.cwd.join(&fc.path))
                .map(|c| c.contains(&fc.text))
                .unwrap_or(false);
            if !found {
                return false;
            }
        }
        true
    }
}

/// Answers matching invocations from canned rules and forwards everything
/// else to a fallback runner. Stateless, so repeated runs are identical.
pub struct StubRunner {
    rules: Vec<StubRule>,
    fallback: Arc<dyn CommandRunner>,
}

impl StubRunner {
    pub fn new(rules: Vec<StubRule>, fallback: Arc<dyn CommandRunner>) -> Self {
        StubRunner { rules, fallback }
    }

    /// Reads rules from a JSON-lines file.
    pub fn load_rules(path: &Path) -> io::Result<Vec<StubRule>> {
        let text = fs::read_to_string(path)?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("{}:{}: {e}", path.display(), i + 1),
                    )
                })
            })
            .collect()
    }
}

impl CommandRunner for StubRunner {
    fn run(&self, inv: &Invocation) -> RunOutcome {
        match self.rules.iter().find(|r| r.matches(inv)) {
            Some(rule) => {
                if rule.creates_output {
                    if let Some(pos) = inv.args.iter().position(|a| a == "-o") {
                        if let Some(out) = inv.args.get(pos + 1) {
                            let path = inv.cwd.join(out);
                            if let Some(parent) = path.parent() {
                                let _ = fs::create_dir_all(parent);
                            }
                            let _ = fs::write(path, b"");
                        }
                    }
                }
                RunOutcome::Finished(RawOutput {
                    exit_code: rule.exit_code,
                    stdout: rule.stdout.clone(),
                    stderr: rule.stderr.clone(),
                    timed_out: rule.timed_out,
                    duration: Duration::ZERO,
                })
            }
            None => self.fallback.run(inv),
        }
    }
}
