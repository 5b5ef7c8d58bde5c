//! Workspace path policy.
//!
//! Tool execution is confined by policy rather than by a container: every
//! path an agent names must stay inside its workspace, and a small set of
//! network-capable binaries is refused outright. The checks are lexical and
//! conservative; a command that merely *looks* like it escapes is refused.

use std::path::{Component, Path};

use thiserror::Error;

/// Paths outside the workspace that commands may still name.
const ALLOWED_ABSOLUTE: &[&str] = &["/dev/null", "/dev/stdout", "/dev/stderr", "/dev/zero"];

/// Binaries refused because they reach the network or a remote host.
const DENIED_BINARIES: &[&str] = &[
    "curl", "wget", "ssh", "scp", "sftp", "rsync", "nc", "ncat", "netcat", "telnet", "ftp",
    "socat", "ping", "sudo", "su", "docker", "chroot", "mount",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyViolation {
    #[error("absolute path outside the workspace: {0}")]
    AbsolutePath(String),
    #[error("path escapes the workspace: {0}")]
    Escape(String),
    #[error("home-relative path is not allowed: {0}")]
    HomePath(String),
    #[error("binary is not allowed in the sandbox: {0}")]
    DeniedBinary(String),
    #[error("empty path")]
    Empty,
}

/// Checks that `path` is relative and never climbs above its root.
///
/// `a/../b` is fine, `a/../../b` is not.
pub fn check_relative_path(path: &str) -> Result<(), PolicyViolation> {
    if path.is_empty() {
        return Err(PolicyViolation::Empty);
    }
    if path.starts_with('~') {
        return Err(PolicyViolation::HomePath(path.to_string()));
    }
    let p = Path::new(path);
    let mut depth: i64 = 0;
    for comp in p.components() {
        match comp {
            Component::Prefix(_) | Component::RootDir => {
                return Err(PolicyViolation::AbsolutePath(path.to_string()))
            }
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return Err(PolicyViolation::Escape(path.to_string()));
                }
            }
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
        }
    }
    Ok(())
}

/// True when a corpus path contains a literal `..` segment or is absolute.
/// Stricter than [`check_relative_path`]: task files may not use `..` at all.
pub fn has_traversal(path: &str) -> bool {
    path.starts_with('/')
        || path.starts_with('\\')
        || path.split(['/', '\\']).any(|seg| seg == "..")
}

/// Checks a shell command line against the workspace policy.
///
/// Heredoc bodies are skipped (they are file content, not paths). Every
/// remaining word is checked: absolute paths, home paths, and `..` escapes
/// are refused, as is any command word naming a denied binary.
pub fn check_command(command: &str) -> Result<(), PolicyViolation> {
    let stripped = strip_heredocs(command, true);
    let words = shell_words(&stripped);
    let mut expect_command = true;
    for word in &words {
        match word {
            Word::Operator => {
                expect_command = true;
                continue;
            }
            Word::Text(text) => {
                if expect_command {
                    // skip leading VAR=value assignments
                    if is_assignment(text) {
                        check_word(text)?;
                        continue;
                    }
                    let base = text.rsplit('/').next().unwrap_or(text);
                    if DENIED_BINARIES.contains(&base) {
                        return Err(PolicyViolation::DeniedBinary(base.to_string()));
                    }
                    expect_command = false;
                }
                check_word(text)?;
            }
        }
    }
    Ok(())
}

/// Basenames of the programs a command line runs, in order. Heredoc
/// bodies and terminators are ignored, as are leading `VAR=value` words.
pub fn command_names(command: &str) -> Vec<String> {
    let stripped = strip_heredocs(command, false);
    let mut names = Vec::new();
    let mut expect_command = true;
    for word in shell_words(&stripped) {
        match word {
            Word::Operator => expect_command = true,
            Word::Text(text) if expect_command && !is_assignment(&text) => {
                names.push(text.rsplit('/').next().unwrap_or(&text).to_string());
                expect_command = false;
            }
            Word::Text(_) => {}
        }
    }
    names
}

fn is_assignment(word: &str) -> bool {
    match word.split_once('=') {
        Some((name, _)) => {
            !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
        None => false,
    }
}

fn check_word(word: &str) -> Result<(), PolicyViolation> {
    // `--out=/x`, `VAR=/x` and `a:b` style values each carry a path
    let mut candidates = vec![word];
    if let Some((_, value)) = word.split_once('=') {
        candidates.push(value);
    }
    for cand in candidates {
        if cand.is_empty() {
            continue;
        }
        if cand.starts_with('/') {
            if ALLOWED_ABSOLUTE.contains(&cand) {
                continue;
            }
            return Err(PolicyViolation::AbsolutePath(cand.to_string()));
        }
        if cand == "~" || cand.starts_with("~/") || cand.starts_with("$HOME") {
            return Err(PolicyViolation::HomePath(cand.to_string()));
        }
        if cand.split('/').any(|seg| seg == "..") {
            check_relative_path(cand)?;
        }
    }
    Ok(())
}

#[derive(Debug, PartialEq)]
enum Word {
    Text(String),
    Operator,
}

/// Minimal shell lexer: splits on blanks and control operators, honours
/// single/double quotes and backslash escapes, drops the quotes.
fn shell_words(input: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut has_cur = false;
    let mut chars = input.chars().peekable();
    let flush = |cur: &mut String, has_cur: &mut bool, words: &mut Vec<Word>| {
        if *has_cur {
            words.push(Word::Text(std::mem::take(cur)));
            *has_cur = false;
        }
    };
    while let Some(c) = chars.next() {
        match c {
            '\'' => {
                has_cur = true;
                for n in chars.by_ref() {
                    if n == '\'' {
                        break;
                    }
                    cur.push(n);
                }
            }
            '"' => {
                has_cur = true;
                while let Some(n) = chars.next() {
                    match n {
                        '"' => break,
                        '\\' => {
                            if let Some(e) = chars.next() {
                                cur.push(e);
                            }
                        }
                        _ => cur.push(n),
                    }
                }
            }
            '\\' => {
                has_cur = true;
                if let Some(e) = chars.next() {
                    cur.push(e);
                }
            }
            ';' | '|' | '&' | '\n' | '(' | ')' | '`' => {
                flush(&mut cur, &mut has_cur, &mut words);
                words.push(Word::Operator);
            }
            '<' | '>' => {
                // redirections: the following word is a path, not a command
                flush(&mut cur, &mut has_cur, &mut words);
                while matches!(chars.peek(), Some('<') | Some('>') | Some('&')) {
                    chars.next();
                }
            }
            '$' if chars.peek() == Some(&'(') => {
                chars.next();
                flush(&mut cur, &mut has_cur, &mut words);
                words.push(Word::Operator);
            }
            c if c.is_whitespace() => flush(&mut cur, &mut has_cur, &mut words),
            _ => {
                has_cur = true;
                cur.push(c);
            }
        }
    }
    flush(&mut cur, &mut has_cur, &mut words);
    words
}

/// Removes the body lines of `<<DELIM` / `<<-'DELIM'` heredocs, keeping the
/// introducing line and, if asked, the terminator.
fn strip_heredocs(command: &str, keep_terminator: bool) -> String {
    let re =
        regex::Regex::new(r#"<<-?\s*['"]?([A-Za-z_][A-Za-z0-9_]*)['"]?"#).expect("static regex");
    let mut out = String::new();
    let mut pending: Vec<String> = Vec::new();
    for line in command.lines() {
        if let Some(delim) = pending.first() {
            if line.trim() == delim {
                pending.remove(0);
                if keep_terminator {
                    out.push_str(line);
                    out.push('\n');
                }
            }
            continue;
        }
        out.push_str(line);
        out.push('\n');
        for caps in re.captures_iter(line) {
            pending.push(caps[1].to_string());
        }
    }
    out
}
