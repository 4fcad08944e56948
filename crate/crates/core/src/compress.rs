//! Observation compression.
//!
//! Raw tool output goes through two deterministic stages. Formatting rewrites
//! it into a compact per-tool representation, drops metadata trailers and
//! caps the line count. If the formatted text is still longer than `tau`
//! characters, a tool-specific extractor keeps only the high-signal parts
//! (change lines, a blame summary, the first log entries, grouped grep
//! matches) and a final character budget is applied.
//!
//! Any output that lost content ends with exactly one notification line that
//! starts with [`NOTICE_PREFIX`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::time::format_day;
use crate::tools::ToolName;

pub const NOTICE_PREFIX: &str = "[truncated:";

/// Upper bound on the length of the single notification line.
pub const NOTICE_MAX_CHARS: usize = 400;

/// Upper bound on one entry of the blame summary header.
pub const BLAME_SUMMARY_ENTRY_MAX_CHARS: usize = 32;

const BLAME_SUMMARY_TITLE_MAX_CHARS: usize = 48;

/// Length of abbreviated hashes in formatted output.
pub const SHORT_HASH_LEN: usize = 8;

pub const DEFAULT_TRAILER_KEYS: [&str; 9] = [
    "Signed-off-by",
    "Reviewed-by",
    "Acked-by",
    "Tested-by",
    "Reported-by",
    "Cc",
    "Link",
    "Suggested-by",
    "Co-developed-by",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineCaps {
    pub show: usize,
    pub blame: usize,
    pub log_s: usize,
    pub log_func: usize,
    pub grep: usize,
}

impl Default for LineCaps {
    fn default() -> Self {
        LineCaps {
            show: 200,
            blame: 200,
            log_s: 150,
            log_func: 300,
            grep: 100,
        }
    }
}

impl LineCaps {
    pub fn for_tool(&self, tool: ToolName) -> usize {
        match tool {
            ToolName::Show => self.show,
            ToolName::Blame => self.blame,
            ToolName::LogS => self.log_s,
            ToolName::LogFunc => self.log_func,
            ToolName::Grep => self.grep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompressionConfig {
    /// Character threshold above which structured extraction runs.
    pub tau: usize,
    pub line_caps: LineCaps,
    pub show_head: usize,
    pub show_tail: usize,
    pub blame_head: usize,
    pub blame_tail: usize,
    pub log_entries: usize,
    pub grep_matches: usize,
    pub trailer_keys: Vec<String>,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            tau: 3000,
            line_caps: LineCaps::default(),
            show_head: 80,
            show_tail: 80,
            blame_head: 60,
            blame_tail: 60,
            log_entries: 30,
            grep_matches: 50,
            trailer_keys: DEFAULT_TRAILER_KEYS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid compression config: {0}")]
pub struct ConfigError(pub String);

impl CompressionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.line_caps;
        if self.tau == 0 {
            return Err(ConfigError("tau must be positive".into()));
        }
        if [c.show, c.blame, c.log_s, c.log_func, c.grep].contains(&0) {
            return Err(ConfigError("line caps must be positive".into()));
        }
        if self.log_entries == 0 || self.grep_matches == 0 {
            return Err(ConfigError("log_entries and grep_matches must be positive".into()));
        }
        Ok(())
    }

    /// Fixed overhead `H` such that every final observation is at most
    /// `tau + H` characters: the blame summary header (one entry per distinct
    /// commit, bounded by the blame line cap) plus the notification line.
    pub fn max_overhead(&self) -> usize {
        BLAME_SUMMARY_TITLE_MAX_CHARS
            + self.line_caps.blame * BLAME_SUMMARY_ENTRY_MAX_CHARS
            + NOTICE_MAX_CHARS
            + 1
    }
}

/// Result of the formatting stage: the body and, when lines were cut, the
/// description of what was cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Formatted {
    pub body: String,
    pub cut: Option<String>,
}

impl Formatted {
    fn plain(body: String) -> Self {
        Formatted { body, cut: None }
    }

    /// Text as the agent would see it if no extraction happened.
    pub fn render(&self) -> String {
        match &self.cut {
            None => self.body.clone(),
            Some(cut) => join_notice(&self.body, &[cut.as_str()]),
        }
    }
}

/// Result of one extractor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    /// Always-kept preamble (the blame summary); empty for other tools.
    pub header: String,
    pub body: String,
    /// What the extractor removed, if anything.
    pub removed: Option<String>,
}

impl Extraction {
    pub fn text(&self) -> String {
        let mut s = self.header.clone();
        s.push_str(&self.body);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub truncated: bool,
    pub cache_hit: bool,
    pub source_tool: ToolName,
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn join_notice(body: &str, parts: &[&str]) -> String {
    let mut notice = String::from(NOTICE_PREFIX);
    notice.push(' ');
    notice.push_str(&parts.join("; "));
    notice.push_str(". Narrow the query (path filter, line range or date window) to see more.]");
    let notice: String = if char_len(&notice) > NOTICE_MAX_CHARS {
        let mut n: String = notice.chars().take(NOTICE_MAX_CHARS - 1).collect();
        n.push(']');
        n
    } else {
        notice
    };
    let mut out = String::from(body);
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&notice);
    out
}

/// Remove `Key: value` trailer lines whose key is in `keys` (case-insensitive).
/// Everything else is kept verbatim and in order.
pub fn strip_trailers(message: &str, keys: &[String]) -> String {
    let mut out = String::with_capacity(message.len());
    for line in message.split_inclusive('\n') {
        if !is_trailer_line(line, keys) {
            out.push_str(line);
        }
    }
    out
}

fn is_trailer_line(line: &str, keys: &[String]) -> bool {
    let t = line.trim_start();
    let Some((key, rest)) = t.split_once(':') else {
        return false;
    };
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t') || rest == "\n") {
        return false;
    }
    keys.iter().any(|k| k.eq_ignore_ascii_case(key))
}

fn cap_lines(text: &str, cap: usize, what: &str) -> Formatted {
    let total = text.lines().count();
    if total <= cap {
        return Formatted::plain(text.to_string());
    }
    let mut body = String::new();
    for line in text.lines().take(cap) {
        body.push_str(line);
        body.push('\n');
    }
    Formatted {
        body,
        cut: Some(format!("showing {cap} of {total} {what} lines")),
    }
}

/// Formatting for `git_show` output: trailers are dropped from the message
/// part (everything before the first `diff --git`), then the line cap applies.
pub fn format_show(raw: &str, cfg: &CompressionConfig) -> Formatted {
    let (head, diff) = match raw.find("\ndiff --git ") {
        Some(i) => raw.split_at(i + 1),
        None if raw.starts_with("diff --git ") => ("", raw),
        None => (raw, ""),
    };
    let mut text = strip_trailers(head, &cfg.trailer_keys);
    text.push_str(diff);
    cap_lines(&text, cfg.line_caps.show, "git_show")
}

/// Formatting for both log tools. Commit bodies may carry trailers.
pub fn format_log(raw: &str, tool: ToolName, cfg: &CompressionConfig) -> Formatted {
    let text = strip_trailers(raw, &cfg.trailer_keys);
    cap_lines(&text, cfg.line_caps.for_tool(tool), tool.as_str())
}

/// Formatting for `git_grep`: drops the `<revision>:` prefix git puts in
/// front of every match.
pub fn format_grep(raw: &str, revision: &str, cfg: &CompressionConfig) -> Formatted {
    let prefix = format!("{revision}:");
    let mut text = String::with_capacity(raw.len());
    for line in raw.lines() {
        text.push_str(line.strip_prefix(prefix.as_str()).unwrap_or(line));
        text.push('\n');
    }
    cap_lines(&text, cfg.line_caps.grep, "git_grep")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed blame porcelain at line {line}: {reason}")]
pub struct MalformedPorcelain {
    pub line: usize,
    pub reason: String,
}

/// One blamed line parsed from porcelain output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlameLine {
    pub commit: String,
    pub orig_line: u32,
    pub final_line: u32,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlameCommitInfo {
    pub summary: String,
    pub committer_time: Option<i64>,
    pub filename: Option<String>,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Porcelain {
    pub lines: Vec<BlameLine>,
    pub commits: BTreeMap<String, BlameCommitInfo>,
}

/// Parse `git blame --porcelain` (or `--line-porcelain`) output.
pub fn parse_porcelain(raw: &str) -> Result<Porcelain, MalformedPorcelain> {
    let mut out = Porcelain::default();
    let mut current: Option<(String, u32, u32)> = None;
    for (idx, line) in raw.lines().enumerate() {
        let bad = |reason: &str| MalformedPorcelain {
            line: idx + 1,
            reason: reason.to_string(),
        };
        if let Some(content) = line.strip_prefix('\t') {
            let (commit, orig, fin) = current.take().ok_or_else(|| bad("content line without header"))?;
            out.lines.push(BlameLine {
                commit,
                orig_line: orig,
                final_line: fin,
                content: content.to_string(),
            });
            continue;
        }
        if current.is_none() {
            let mut parts = line.split(' ');
            let hash = parts.next().unwrap_or("");
            if hash.len() != 40 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad("expected a commit header"));
            }
            let orig = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing original line"))?;
            let fin = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("missing final line"))?;
            out.commits.entry(hash.to_string()).or_default();
            current = Some((hash.to_string(), orig, fin));
            continue;
        }
        let hash = &current.as_ref().expect("header seen").0;
        let info = out.commits.entry(hash.clone()).or_default();
        let (key, value) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "summary" => info.summary = value.to_string(),
            "committer-time" => info.committer_time = value.parse().ok(),
            "filename" => info.filename = Some(value.to_string()),
            "boundary" => info.boundary = true,
            _ => {}
        }
    }
    if current.is_some() {
        return Err(MalformedPorcelain {
            line: raw.lines().count(),
            reason: "header without content line".into(),
        });
    }
    Ok(out)
}

/// Render blame porcelain as `L{n}: {short-hash} | {code}` lines followed by
/// a legend mapping each short hash to its date and subject.
pub fn format_blame(raw: &str, cfg: &CompressionConfig) -> Result<Formatted, MalformedPorcelain> {
    let parsed = parse_porcelain(raw)?;
    let cap = cfg.line_caps.blame;
    let total = parsed.lines.len();
    let shown = &parsed.lines[..total.min(cap)];
    let mut body = String::new();
    let mut order: Vec<&str> = Vec::new();
    for l in shown {
        body.push_str(&format!(
            "L{}: {} | {}\n",
            l.final_line,
            &l.commit[..SHORT_HASH_LEN],
            l.content
        ));
        if !order.contains(&l.commit.as_str()) {
            order.push(&l.commit);
        }
    }
    if !order.is_empty() {
        body.push_str("\nCommits:\n");
        for hash in order {
            let info = &parsed.commits[hash];
            let date = info.committer_time.map(format_day).unwrap_or_default();
            let boundary = if info.boundary { " (history boundary)" } else { "" };
            body.push_str(&format!(
                "  {} {} {}{}\n",
                &hash[..SHORT_HASH_LEN],
                date,
                info.summary,
                boundary
            ));
        }
    }
    let cut = (total > cap).then(|| format!("showing {cap} of {total} blamed lines"));
    Ok(Formatted { body, cut })
}

fn head_tail(lines: Vec<&str>, head: usize, tail: usize) -> (String, usize) {
    let mut out = String::new();
    if lines.len() <= head + tail {
        for l in &lines {
            out.push_str(l);
            out.push('\n');
        }
        return (out, 0);
    }
    let elided = lines.len() - head - tail;
    for l in &lines[..head] {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(&format!("... [{elided} lines elided] ...\n"));
    for l in &lines[lines.len() - tail..] {
        out.push_str(l);
        out.push('\n');
    }
    (out, elided)
}

/// Keep commit header/message, file headers, hunk headers and `+`/`-` lines;
/// drop diff context; then head/tail truncate.
pub fn extract_show(formatted: &str, cfg: &CompressionConfig) -> Extraction {
    let mut kept: Vec<&str> = Vec::new();
    let mut in_diff = false;
    let mut dropped = 0usize;
    for line in formatted.lines() {
        if line.starts_with("diff --git ") {
            in_diff = true;
            kept.push(line);
            continue;
        }
        if !in_diff {
            kept.push(line);
            continue;
        }
        let keep = line.starts_with('+')
            || line.starts_with('-')
            || line.starts_with("@@")
            || line.starts_with("index ")
            || line.starts_with("new file")
            || line.starts_with("deleted file")
            || line.starts_with("old mode")
            || line.starts_with("new mode")
            || line.starts_with("similarity ")
            || line.starts_with("rename ")
            || line.starts_with("Binary files");
        if keep {
            kept.push(line);
        } else {
            dropped += 1;
        }
    }
    let (body, elided) = head_tail(kept, cfg.show_head, cfg.show_tail);
    let mut removed = Vec::new();
    if dropped > 0 {
        removed.push(format!("{dropped} diff context lines removed"));
    }
    if elided > 0 {
        removed.push(format!("{elided} lines elided"));
    }
    Extraction {
        header: String::new(),
        body,
        removed: (!removed.is_empty()).then(|| removed.join(", ")),
    }
}

fn parse_blame_formatted(line: &str) -> Option<&str> {
    let rest = line.strip_prefix('L')?;
    let (num, rest) = rest.split_once(": ")?;
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let (hash, _) = rest.split_once(" | ")?;
    Some(hash)
}

/// Summarise formatted blame: a header listing each distinct commit once with
/// its line count, then head/tail truncated `L` lines. The legend is dropped.
pub fn extract_blame(formatted: &str, cfg: &CompressionConfig) -> Extraction {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    let mut lines: Vec<&str> = Vec::new();
    let mut other = 0usize;
    for line in formatted.lines() {
        match parse_blame_formatted(line) {
            Some(hash) => {
                match counts.iter_mut().find(|(h, _)| *h == hash) {
                    Some(e) => e.1 += 1,
                    None => counts.push((hash, 1)),
                }
                lines.push(line);
            }
            None => other += usize::from(!line.trim().is_empty()),
        }
    }
    let mut header = format!("Blame summary ({} commits):\n", counts.len());
    for (hash, n) in &counts {
        let short: String = hash.chars().take(SHORT_HASH_LEN).collect();
        header.push_str(&format!("  {short}  {n:>5} lines\n"));
    }
    header.push('\n');
    let (body, elided) = head_tail(lines, cfg.blame_head, cfg.blame_tail);
    let mut removed = Vec::new();
    if elided > 0 {
        removed.push(format!("{elided} blame lines elided"));
    }
    if other > 0 {
        removed.push(String::from("commit legend folded into summary"));
    }
    Extraction {
        header,
        body,
        removed: (!removed.is_empty()).then(|| removed.join(", ")),
    }
}

/// Keep the first `log_entries` entries; entries start at `commit ` lines.
pub fn extract_log(formatted: &str, cfg: &CompressionConfig) -> Extraction {
    let mut body = String::new();
    let mut entries = 0usize;
    for line in formatted.lines() {
        if line.starts_with("commit ") {
            entries += 1;
        }
        if entries <= cfg.log_entries {
            body.push_str(line);
            body.push('\n');
        }
    }
    let omitted = entries.saturating_sub(cfg.log_entries);
    Extraction {
        header: String::new(),
        body,
        removed: (omitted > 0).then(|| {
            format!(
                "{omitted} omitted, showing first {} of {entries} log entries",
                cfg.log_entries
            )
        }),
    }
}

/// Split `path:line:text`; the path may itself contain `:`.
fn split_grep_line(line: &str) -> Option<(&str, &str, &str)> {
    let bytes = line.as_bytes();
    let mut i = 0;
    while let Some(off) = line[i..].find(':') {
        let colon = i + off;
        let digits_end = bytes[colon + 1..]
            .iter()
            .position(|b| !b.is_ascii_digit())
            .map(|p| colon + 1 + p);
        if let Some(end) = digits_end {
            if end > colon + 1 && bytes[end] == b':' {
                return Some((&line[..colon], &line[colon + 1..end], &line[end + 1..]));
            }
        }
        i = colon + 1;
    }
    None
}

/// Group matches by file and keep the first `grep_matches` of them.
pub fn extract_grep(formatted: &str, cfg: &CompressionConfig) -> Extraction {
    let mut groups: Vec<(&str, Vec<(&str, &str)>)> = Vec::new();
    let mut loose: Vec<&str> = Vec::new();
    for line in formatted.lines() {
        match split_grep_line(line) {
            Some((path, n, text)) => match groups.iter_mut().find(|(p, _)| *p == path) {
                Some(g) => g.1.push((n, text)),
                None => groups.push((path, alloc::vec![(n, text)])),
            },
            None if !line.trim().is_empty() => loose.push(line),
            None => {}
        }
    }
    let total: usize = groups.iter().map(|g| g.1.len()).sum();
    let mut budget = cfg.grep_matches;
    let mut body = String::new();
    let mut omitted_files = 0usize;
    for (path, matches) in &groups {
        if budget == 0 {
            omitted_files += 1;
            continue;
        }
        body.push_str(&format!("{path} ({} matches)\n", matches.len()));
        for (n, text) in matches.iter().take(budget) {
            body.push_str(&format!("  {n}: {text}\n"));
        }
        budget = budget.saturating_sub(matches.len());
    }
    for l in &loose {
        body.push_str(l);
        body.push('\n');
    }
    let omitted = total.saturating_sub(cfg.grep_matches);
    Extraction {
        header: String::new(),
        body,
        removed: (omitted > 0).then(|| {
            format!(
                "{omitted} matches omitted ({omitted_files} files not shown), showing first {} of {total}",
                cfg.grep_matches
            )
        }),
    }
}

/// Keep whole leading lines while they fit in `budget` characters. If not
/// even the first line fits, keep its first `budget` characters.
fn fit_chars(text: &str, budget: usize) -> (String, bool) {
    if char_len(text) <= budget {
        return (text.to_string(), false);
    }
    let mut out = String::new();
    let mut used = 0usize;
    for line in text.split_inclusive('\n') {
        let n = char_len(line);
        if used + n > budget {
            break;
        }
        out.push_str(line);
        used += n;
    }
    if out.is_empty() {
        out = text.chars().take(budget).collect();
    }
    (out, true)
}

/// Formatting and, above `tau`, structured extraction. Returns the final text
/// and whether anything was dropped.
pub fn compress_formatted(tool: ToolName, formatted: &Formatted, cfg: &CompressionConfig) -> (String, bool) {
    let rendered = formatted.render();
    if char_len(&rendered) <= cfg.tau {
        return (rendered, formatted.cut.is_some());
    }
    let extraction = match tool {
        ToolName::Show => extract_show(&formatted.body, cfg),
        ToolName::Blame => extract_blame(&formatted.body, cfg),
        ToolName::LogS | ToolName::LogFunc => extract_log(&formatted.body, cfg),
        ToolName::Grep => extract_grep(&formatted.body, cfg),
    };
    let budget = cfg.tau.saturating_sub(char_len(&extraction.header));
    let (body, cut_chars) = fit_chars(&extraction.body, budget);
    let mut parts: Vec<String> = Vec::new();
    if let Some(c) = &formatted.cut {
        parts.push(c.clone());
    }
    if let Some(r) = &extraction.removed {
        parts.push(r.clone());
    }
    if cut_chars {
        parts.push(format!("output clipped to {} characters", cfg.tau));
    }
    let mut text = extraction.header.clone();
    text.push_str(&body);
    if parts.is_empty() {
        return (text, false);
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    (join_notice(&text, &refs), true)
}

/// Text of a timed-out call; the hint wording is what the agent keys on.
pub fn timeout_observation(tool: ToolName, seconds: f64) -> String {
    format!(
        "{tool} timed out after {seconds:.1}s. Retry with narrower parameters (add a path filter, \
         a smaller line range or a tighter date window)."
    )
}
