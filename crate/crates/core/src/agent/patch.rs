//! Unified-diff application with exact context matching.
//!
//! Hunks may apply at an offset from their stated position, but context and
//! removed lines must match byte for byte. Files are written only if every
//! hunk for that file applies.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::check_relative_path;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("malformed diff at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedHunk {
    pub file: String,
    /// 1-based position of the hunk within its file section.
    pub hunk: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchReport {
    pub applied_files: BTreeSet<String>,
    pub rejects: Vec<RejectedHunk>,
}

#[derive(Debug)]
struct Hunk {
    old_start: usize,
    lines: Vec<(char, String)>,
    no_newline_old: bool,
    no_newline_new: bool,
}

#[derive(Debug)]
struct FilePatch {
    old: Option<String>,
    new: Option<String>,
    hunks: Vec<Hunk>,
}

impl FilePatch {
    fn target(&self) -> &str {
        self.new
            .as_deref()
            .or(self.old.as_deref())
            .unwrap_or_default()
    }
}

fn malformed(line: usize, message: impl Into<String>) -> PatchError {
    PatchError::Malformed {
        line: line + 1,
        message: message.into(),
    }
}

/// `a/rtl/x.sv\t2024-01-01` → `Some("rtl/x.sv")`; `/dev/null` → `None`.
fn header_path(rest: &str) -> Option<String> {
    let raw = rest.split('\t').next().unwrap_or("").trim();
    let raw = raw.trim_matches('"');
    if raw == "/dev/null" {
        return None;
    }
    let stripped = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(stripped.strip_prefix("./").unwrap_or(stripped).to_string())
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    let (start, len) = match s.split_once(',') {
        Some((a, b)) => (a.parse().ok()?, b.parse().ok()?),
        None => (s.parse().ok()?, 1),
    };
    Some((start, len))
}

fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize)> {
    let inner = line.strip_prefix("@@ -")?;
    let (ranges, _) = inner.split_once(" @@")?;
    let (old, new) = ranges.split_once(" +")?;
    let (old_start, old_len) = parse_range(old)?;
    let (_, new_len) = parse_range(new)?;
    Some((old_start, old_len, new_len))
}

/// Records a "\\ No newline at end of file" marker against the side of the
/// line it follows.
fn mark_no_newline(hunk: &mut Hunk) {
    match hunk.lines.last().map(|(t, _)| *t) {
        Some('-') => hunk.no_newline_old = true,
        Some('+') => hunk.no_newline_new = true,
        _ => {
            hunk.no_newline_old = true;
            hunk.no_newline_new = true;
        }
    }
}

fn parse_diff(text: &str) -> Result<Vec<FilePatch>, PatchError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut files: Vec<FilePatch> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("--- ") {
            let plus = lines
                .get(i + 1)
                .and_then(|l| l.strip_prefix("+++ "))
                .ok_or_else(|| malformed(i + 1, "expected `+++` header after `---`"))?;
            let old = header_path(rest);
            let new = header_path(plus);
            if old.is_none() && new.is_none() {
                return Err(malformed(i, "both sides are /dev/null"));
            }
            files.push(FilePatch {
                old,
                new,
                hunks: Vec::new(),
            });
            i += 2;
            continue;
        }
        if line.starts_with("@@") {
            let (old_start, mut old_left, mut new_left) =
                parse_hunk_header(line).ok_or_else(|| malformed(i, "bad hunk header"))?;
            let file = files
                .last_mut()
                .ok_or_else(|| malformed(i, "hunk before any file header"))?;
            let mut hunk = Hunk {
                old_start,
                lines: Vec::new(),
                no_newline_old: false,
                no_newline_new: false,
            };
            i += 1;
            while old_left > 0 || new_left > 0 {
                let Some(&l) = lines.get(i) else {
                    return Err(malformed(i, "hunk ends early"));
                };
                let (tag, body) = match l.chars().next() {
                    None => (' ', ""),
                    Some(c @ (' ' | '-' | '+')) => (c, &l[1..]),
                    Some('\\') => {
                        mark_no_newline(&mut hunk);
                        i += 1;
                        continue;
                    }
                    Some(_) => return Err(malformed(i, "unexpected line inside hunk")),
                };
                match tag {
                    ' ' if old_left > 0 && new_left > 0 => {
                        old_left -= 1;
                        new_left -= 1;
                    }
                    '-' if old_left > 0 => old_left -= 1,
                    '+' if new_left > 0 => new_left -= 1,
                    _ => return Err(malformed(i, "hunk longer than its header says")),
                }
                hunk.lines.push((tag, body.to_string()));
                i += 1;
            }
            // trailing "\ No newline at end of file" markers
            while lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                mark_no_newline(&mut hunk);
                i += 1;
            }
            file.hunks.push(hunk);
            continue;
        }
        // `diff --git`, `index`, mode lines and commentary between sections
        i += 1;
    }
    Ok(files)
}

fn find_block(lines: &[String], old: &[&str], hint: usize, from: usize) -> Option<usize> {
    if old.is_empty() {
        return Some(hint.clamp(from, lines.len()));
    }
    if old.len() > lines.len() {
        return None;
    }
    let last = lines.len() - old.len();
    let matches_at = |p: usize| {
        p >= from && p <= last && lines[p..p + old.len()].iter().zip(old).all(|(a, b)| a == b)
    };
    // nearest match to the stated position wins
    (0..=lines.len()).find_map(|d| {
        if hint >= d && matches_at(hint - d) {
            Some(hint - d)
        } else if matches_at(hint + d) {
            Some(hint + d)
        } else {
            None
        }
    })
}

fn apply_file(ws: &Path, fp: &FilePatch, report: &mut PatchReport) {
    let target = fp.target().to_string();
    let reject = |report: &mut PatchReport, hunk: usize, reason: String| {
        report.rejects.push(RejectedHunk {
            file: target.clone(),
            hunk,
            reason,
        });
    };
    for p in [&fp.old, &fp.new].into_iter().flatten() {
        if let Err(v) = check_relative_path(p) {
            for h in 1..=fp.hunks.len().max(1) {
                reject(report, h, format!("policy violation: {v}"));
            }
            return;
        }
    }
    let path = ws.join(&target);
    let (mut lines, mut trailing_newline) = match &fp.old {
        None => {
            if path.exists() {
                reject(report, 1, "file to be created already exists".into());
                return;
            }
            (Vec::new(), true)
        }
        Some(old) => match fs::read_to_string(ws.join(old)) {
            Ok(c) => {
                let nl = c.ends_with('\n') || c.is_empty();
                let body = c.strip_suffix('\n').unwrap_or(&c);
                let lines: Vec<String> = if c.is_empty() {
                    Vec::new()
                } else {
                    body.split('\n').map(str::to_string).collect()
                };
                (lines, nl)
            }
            Err(e) => {
                reject(report, 1, format!("cannot read {old}: {e}"));
                return;
            }
        },
    };

    let mut failed = false;
    let mut cursor = 0usize;
    let mut delta: isize = 0;
    for (idx, h) in fp.hunks.iter().enumerate() {
        let old_block: Vec<&str> = h
            .lines
            .iter()
            .filter(|(t, _)| *t != '+')
            .map(|(_, s)| s.as_str())
            .collect();
        let new_block: Vec<String> = h
            .lines
            .iter()
            .filter(|(t, _)| *t != '-')
            .map(|(_, s)| s.clone())
            .collect();
        let stated = (h.old_start.saturating_sub(1) as isize + delta).max(0) as usize;
        let stated = if old_block.is_empty() && h.old_start == 0 {
            0
        } else {
            stated
        };
        match find_block(&lines, &old_block, stated, cursor) {
            Some(at) => {
                let touches_end = at + old_block.len() == lines.len();
                lines.splice(at..at + old_block.len(), new_block.iter().cloned());
                cursor = at + new_block.len();
                delta += new_block.len() as isize - old_block.len() as isize;
                if touches_end && (h.no_newline_old || h.no_newline_new) {
                    trailing_newline = !h.no_newline_new;
                }
            }
            None => {
                failed = true;
                reject(report, idx + 1, "context does not match".into());
            }
        }
    }
    if failed {
        return;
    }

    let result = if fp.new.is_none() {
        if !lines.is_empty() {
            reject(
                report,
                fp.hunks.len().max(1),
                "deletion leaves content behind".into(),
            );
            return;
        }
        fs::remove_file(&path)
    } else {
        let mut content = lines.join("\n");
        if trailing_newline && !lines.is_empty() {
            content.push('\n');
        }
        if let Some(parent) = path.parent() {
            let _ = fs::create_dir_all(parent);
        }
        let write = fs::write(&path, content);
        match (&fp.old, write) {
            (Some(old), Ok(())) if old != &target => fs::remove_file(ws.join(old)),
            (_, r) => r,
        }
    };
    match result {
        Ok(()) => {
            report.applied_files.insert(target.clone());
            if let Some(old) = fp.old.as_ref().filter(|o| **o != target) {
                report.applied_files.insert(old.clone());
            }
        }
        Err(e) => reject(report, 1, format!("write failed: {e}")),
    }
}

/// Applies `patch_text` to the workspace.
///
/// An empty patch applies nothing. A file whose hunks do not all match is
/// left untouched and its failing hunks are reported.
pub fn apply_patch(ws: &Path, patch_text: &str) -> Result<PatchReport, PatchError> {
    let files = parse_diff(patch_text)?;
    if files.is_empty() && patch_text.lines().any(|l| l.starts_with("@@")) {
        return Err(malformed(0, "hunks without file headers"));
    }
    let mut report = PatchReport::default();
    for fp in &files {
        apply_file(ws, fp, &mut report);
    }
    Ok(report)
}
