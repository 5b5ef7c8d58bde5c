//! ANSI-style module header parsing.
//!
//! Only headers whose port list carries directions inline are accepted
//! (`module m(input logic [3:0] a, output y);`). A 1995-style list of bare
//! names is reported as [`PortError::NonAnsi`] instead of being guessed at.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        })
    }
}

/// One module port.
///
/// `msb`/`lsb` are set only for a single packed range with literal bounds.
/// Any other range (parameterized, multi-dimensional) keeps `msb`/`lsb`
/// unset and is carried textually in `range` and in the `net_type`
/// annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortInfo {
    pub name: String,
    pub direction: Direction,
    pub msb: Option<i64>,
    pub lsb: Option<i64>,
    pub net_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<String>,
}

impl PortInfo {
    pub fn width(&self) -> Option<u64> {
        match (self.msb, self.lsb, &self.range) {
            (Some(m), Some(l), _) => Some(m.abs_diff(l) + 1),
            (None, None, None) => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for PortInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<6} {}", self.direction, self.net_type)?;
        if self.msb.is_some() {
            if let Some(r) = &self.range {
                write!(f, " {r}")?;
            }
        }
        write!(f, " {}", self.name)?;
        match self.width() {
            Some(w) => write!(f, " (width {w})"),
            None => write!(f, " (width parameterized)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("no module declaration found")]
    NoModule,
    #[error("line {line_no}: non-ANSI port list is not supported: {line}")]
    NonAnsi { line_no: usize, line: String },
    #[error("line {line_no}: cannot parse module header ({reason}): {line}")]
    Unparseable {
        line_no: usize,
        line: String,
        reason: String,
    },
}

const TYPE_KEYWORDS: &[&str] = &[
    "wire",
    "logic",
    "reg",
    "tri",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "wand",
    "wor",
    "uwire",
    "supply0",
    "supply1",
    "bit",
    "var",
    "byte",
    "shortint",
    "int",
    "longint",
    "integer",
    "time",
    "real",
    "signed",
    "unsigned",
    "interconnect",
];

/// Returns the ports of the first module in `source`, in declaration order.
pub fn parse_module_ports(source: &str) -> Result<Vec<PortInfo>, PortError> {
    let text = strip_comments(source);
    let bytes = text.as_bytes();
    let start = find_module_keyword(&text).ok_or(PortError::NoModule)?;
    let err = |pos: usize, reason: &str| unparseable(source, pos, reason);

    let mut pos = skip_ws(bytes, start);
    pos = read_ident(bytes, pos)
        .ok_or_else(|| err(start, "missing module name"))?
        .1;
    pos = skip_ws(bytes, pos);
    if let Some((word, end)) = read_ident(bytes, pos) {
        if word == "automatic" || word == "static" {
            pos = skip_ws(bytes, end);
        }
    }
    // package imports in the header
    while let Some((word, end)) = read_ident(bytes, pos) {
        if word != "import" {
            break;
        }
        let semi = text[end..]
            .find(';')
            .ok_or_else(|| err(pos, "unterminated import"))?;
        pos = skip_ws(bytes, end + semi + 1);
    }
    if bytes.get(pos) == Some(&b'#') {
        pos = skip_ws(bytes, pos + 1);
        if bytes.get(pos) != Some(&b'(') {
            return Err(err(pos, "expected `(` after `#`"));
        }
        pos = skip_ws(
            bytes,
            matching_close(bytes, pos).ok_or_else(|| err(pos, "unbalanced parameter list"))? + 1,
        );
    }
    match bytes.get(pos) {
        Some(b';') => return Ok(Vec::new()),
        Some(b'(') => {}
        _ => return Err(err(pos, "expected port list")),
    }
    let close = matching_close(bytes, pos).ok_or_else(|| err(pos, "unbalanced port list"))?;
    let list_start = pos + 1;
    let items = split_top_level(&text[list_start..close], list_start);
    if items.len() == 1 && items[0].1.trim().is_empty() {
        return Ok(Vec::new());
    }

    let mut ports: Vec<PortInfo> = Vec::new();
    for (idx, (offset, item)) in items.iter().enumerate() {
        let item_pos = offset + (item.len() - item.trim_start().len());
        let tokens = tokenize(item.trim());
        if tokens.is_empty() {
            return Err(err(item_pos, "empty port entry"));
        }
        let mut i = 0;
        let direction = match &tokens[0] {
            Tok::Ident(w) if w == "input" => Some(Direction::Input),
            Tok::Ident(w) if w == "output" => Some(Direction::Output),
            Tok::Ident(w) if w == "inout" => Some(Direction::Inout),
            _ => None,
        };
        if direction.is_some() {
            i += 1;
        }
        let mut type_words: Vec<String> = Vec::new();
        let mut ranges: Vec<String> = Vec::new();
        let mut name: Option<String> = None;
        while i < tokens.len() {
            match &tokens[i] {
                Tok::Ident(w)
                    if TYPE_KEYWORDS.contains(&w.as_str())
                        && name.is_none()
                        && ranges.is_empty() =>
                {
                    type_words.push(w.clone());
                }
                Tok::Ident(w) if name.is_none() => {
                    // a user-defined type is an identifier followed by another identifier
                    let next_is_name = tokens[i + 1..]
                        .iter()
                        .find(|t| !matches!(t, Tok::Range(_)))
                        .is_some_and(|t| matches!(t, Tok::Ident(_)));
                    if next_is_name && ranges.is_empty() {
                        type_words.push(w.clone());
                    } else {
                        name = Some(w.clone());
                    }
                }
                Tok::Range(r) if name.is_none() => ranges.push(r.clone()),
                Tok::Range(_) => {} // unpacked dimension
                Tok::Punct('=') if name.is_some() => break,
                Tok::Ident(_) | Tok::Punct(_) => {
                    return Err(err(item_pos, "unexpected token in port declaration"));
                }
            }
            i += 1;
        }
        let Some(name) = name else {
            return Err(err(item_pos, "port has no name"));
        };

        let port = match (direction, ports.last()) {
            (Some(dir), _) => build_port(name, dir, &type_words, &ranges),
            (None, None) => {
                if type_words.is_empty() && ranges.is_empty() {
                    return Err(PortError::NonAnsi {
                        line_no: line_of(source, item_pos),
                        line: line_text(source, item_pos),
                    });
                }
                return Err(err(item_pos, "first port has no direction"));
            }
            (None, Some(prev)) => {
                if type_words.is_empty() && ranges.is_empty() {
                    // `input [3:0] a, b` : b inherits everything
                    PortInfo {
                        name,
                        ..prev.clone()
                    }
                } else {
                    build_port(name, prev.direction, &type_words, &ranges)
                }
            }
        };
        debug_assert!(idx == ports.len());
        ports.push(port);
    }
    Ok(ports)
}

fn build_port(
    name: String,
    direction: Direction,
    type_words: &[String],
    ranges: &[String],
) -> PortInfo {
    let mut net_type = type_words.join(" ");
    if type_words.iter().all(|w| w == "signed" || w == "unsigned") {
        net_type = if net_type.is_empty() {
            "wire".to_string()
        } else {
            format!("wire {net_type}")
        };
    }
    let range = if ranges.is_empty() {
        None
    } else {
        Some(ranges.concat())
    };
    let bounds = match ranges {
        [single] => literal_bounds(single),
        _ => None,
    };
    let (msb, lsb) = match bounds {
        Some((m, l)) => (Some(m), Some(l)),
        None => {
            if let Some(r) = &range {
                net_type = format!("{net_type} {r}");
            }
            (None, None)
        }
    };
    PortInfo {
        name,
        direction,
        msb,
        lsb,
        net_type,
        range,
    }
}

fn literal_bounds(range: &str) -> Option<(i64, i64)> {
    let inner = range.strip_prefix('[')?.strip_suffix(']')?;
    let (m, l) = inner.split_once(':')?;
    Some((m.trim().parse().ok()?, l.trim().parse().ok()?))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    /// bracketed range with inner whitespace removed, e.g. `[WIDTH-1:0]`
    Range(String),
    Punct(char),
}

fn tokenize(item: &str) -> Vec<Tok> {
    let bytes = item.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'[' {
            let end = matching_close(bytes, i).unwrap_or(bytes.len() - 1);
            let raw: String = item[i..=end]
                .chars()
                .filter(|c| !c.is_whitespace())
                .collect();
            toks.push(Tok::Range(raw));
            i = end + 1;
        } else if let Some((word, end)) = read_ident(bytes, i) {
            toks.push(Tok::Ident(word.to_string()));
            i = end;
        } else {
            toks.push(Tok::Punct(c as char));
            if c == b'=' {
                // default value: the rest is an expression
                break;
            }
            i += 1;
        }
    }
    toks
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn read_ident(bytes: &[u8], pos: usize) -> Option<(&str, usize)> {
    if pos < bytes.len() && bytes[pos] == b'\\' {
        // escaped identifier runs to whitespace
        let mut end = pos + 1;
        while end < bytes.len() && !bytes[end].is_ascii_whitespace() {
            end += 1;
        }
        return Some((std::str::from_utf8(&bytes[pos..end]).ok()?, end));
    }
    if pos >= bytes.len() || !is_ident_start(bytes[pos]) {
        return None;
    }
    let mut end = pos + 1;
    while end < bytes.len() && is_ident_char(bytes[end]) {
        end += 1;
    }
    Some((std::str::from_utf8(&bytes[pos..end]).ok()?, end))
}

fn skip_ws(bytes: &[u8], mut pos: usize) -> usize {
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

/// Index of the bracket closing the one at `open`.
fn matching_close(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (i, &c) in bytes.iter().enumerate().skip(open) {
        match c {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits on commas outside any bracket; each piece keeps its absolute offset.
fn split_top_level(list: &str, base: usize) -> Vec<(usize, &str)> {
    let mut items = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in list.bytes().enumerate() {
        match c {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b',' if depth == 0 => {
                items.push((base + start, &list[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    items.push((base + start, &list[start..]));
    items
}

fn find_module_keyword(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if let Some((word, end)) = read_ident(bytes, i) {
            let boundary = i == 0 || !is_ident_char(bytes[i - 1]);
            if boundary && (word == "module" || word == "macromodule") {
                return Some(end);
            }
            i = end;
        } else {
            i += 1;
        }
    }
    None
}

/// Blanks out `//` and `/* */` comments and attribute instances, keeping
/// byte offsets and newlines so errors can cite original lines.
pub(crate) fn strip_comments(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    let mut in_string = false;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            if c == b'\\' {
                i += 2;
                continue;
            }
            if c == b'"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        let next = bytes.get(i + 1).copied();
        let blank_until = |out: &mut Vec<u8>, from: usize, to: usize| {
            for b in out.iter_mut().take(to).skip(from) {
                if *b != b'\n' {
                    *b = b' ';
                }
            }
        };
        match (c, next) {
            (b'"', _) => {
                in_string = true;
                i += 1;
            }
            (b'/', Some(b'/')) => {
                let end = source[i..].find('\n').map_or(bytes.len(), |n| i + n);
                blank_until(&mut out, i, end);
                i = end;
            }
            (b'/', Some(b'*')) => {
                let end = source[i + 2..]
                    .find("*/")
                    .map_or(bytes.len(), |n| i + 2 + n + 2);
                blank_until(&mut out, i, end);
                i = end;
            }
            (b'(', Some(b'*')) if bytes.get(i + 2) != Some(&b')') => {
                let end = source[i + 2..]
                    .find("*)")
                    .map_or(bytes.len(), |n| i + 2 + n + 2);
                blank_until(&mut out, i, end);
                i = end;
            }
            _ => i += 1,
        }
    }
    // only ASCII bytes were replaced, so this stays valid UTF-8
    String::from_utf8(out).expect("blanking preserves UTF-8")
}

fn line_of(source: &str, pos: usize) -> usize {
    source[..pos.min(source.len())].matches('\n').count() + 1
}

fn line_text(source: &str, pos: usize) -> String {
    let pos = pos.min(source.len());
    let start = source[..pos].rfind('\n').map_or(0, |n| n + 1);
    let end = source[pos..].find('\n').map_or(source.len(), |n| pos + n);
    source[start..end].trim_end().to_string()
}

fn unparseable(source: &str, pos: usize, reason: &str) -> PortError {
    PortError::Unparseable {
        line_no: line_of(source, pos),
        line: line_text(source, pos),
        reason: reason.to_string(),
    }
}
