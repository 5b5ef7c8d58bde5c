/// Smallest cap accepted by [`truncate_output`]; smaller caps are raised to it.
pub const MIN_OUTPUT_CAP: usize = 64;

/// Keeps the first and last `cap/2` bytes of `text` (on UTF-8 boundaries)
/// joined by a marker line giving the number of elided bytes.
///
/// Returns the text unchanged when it fits in `cap`.
pub fn truncate_output(text: &str, cap_bytes: usize) -> (String, bool) {
    truncate_to(text, cap_bytes.max(MIN_OUTPUT_CAP))
}

pub(crate) fn marker(elided: usize) -> String {
    format!("\n[... {elided} bytes elided ...]\n")
}

fn truncate_to(text: &str, budget: usize) -> (String, bool) {
    if text.len() <= budget {
        return (text.to_string(), false);
    }
    let head_len = floor_boundary(text, budget / 2);
    let tail_start = ceil_boundary(text, text.len() - (budget - budget / 2));
    let head = &text[..head_len];
    let tail = &text[tail_start..];
    let elided = text.len() - head.len() - tail.len();
    let mut out = String::with_capacity(budget + 48);
    out.push_str(head);
    out.push_str(&marker(elided));
    out.push_str(tail);
    (out, true)
}

fn floor_boundary(s: &str, mut idx: usize) -> usize {
    while idx > 0 && !s.is_char_boundary(idx) {
        idx -= 1;
    }
    idx
}

fn ceil_boundary(s: &str, mut idx: usize) -> usize {
    while idx < s.len() && !s.is_char_boundary(idx) {
        idx += 1;
    }
    idx
}

/// Caps stdout and stderr jointly at `cap` bytes.
///
/// When both streams overflow each gets half the budget; otherwise the short
/// stream is kept whole and the long one gets the remainder.
pub fn cap_streams(stdout: &str, stderr: &str, cap: usize) -> (String, String, bool) {
    let cap = cap.max(MIN_OUTPUT_CAP);
    if stdout.len() + stderr.len() <= cap {
        return (stdout.to_string(), stderr.to_string(), false);
    }
    let half = cap / 2;
    let (out_budget, err_budget) = if stderr.len() <= half {
        (cap - stderr.len(), stderr.len())
    } else if stdout.len() <= half {
        (stdout.len(), cap - stdout.len())
    } else {
        (cap - half, half)
    };
    let (out, t1) = truncate_to(stdout, out_budget);
    let (err, t2) = truncate_to(stderr, err_budget);
    (out, err, t1 || t2)
}
