//! From a validated tool call to the observation the model sees.

use bictrace_core::agent::ToolRunner;
use bictrace_core::cache::{CallCache, RawOutput};
use bictrace_core::compress::{
    compress_formatted, format_blame, format_grep, format_log, format_show, timeout_observation, CompressionConfig,
    Formatted, Observation,
};
use bictrace_core::redact::redact_leakage;
use bictrace_core::time::Timestamp;
use bictrace_core::tools::enforce_search_bound;
use bictrace_core::{CommitId, ToolArgs, ToolName};

use crate::toolkit::{exec_tool, grep_revision, ToolContext, ToolError};

/// Everything one case needs to run tools.
pub struct CaseTools {
    pub ctx: ToolContext,
    pub cache: CallCache,
    pub cfg: CompressionConfig,
    pub fix_date: Timestamp,
    /// The fixing commit, whose own message is redacted if a tool shows it.
    pub fix_id: Option<CommitId>,
}

impl CaseTools {
    pub fn new(ctx: ToolContext, cfg: CompressionConfig, fix_date: Timestamp, fix_id: Option<CommitId>) -> Self {
        CaseTools {
            ctx,
            cache: CallCache::new(),
            cfg,
            fix_date,
            fix_id,
        }
    }
}

impl ToolRunner for CaseTools {
    fn run(&mut self, args: &ToolArgs) -> Observation {
        execute_compressed(
            &self.ctx,
            args,
            self.fix_date,
            &mut self.cache,
            &self.cfg,
            self.fix_id.as_ref(),
        )
    }
}

pub fn error_text(tool: ToolName, err: &ToolError) -> String {
    format!("Error from {tool}: {err}.")
}

/// Apply the fix-message redaction to output that shows the fixing commit.
fn redact_fix_commit(tool: ToolName, raw: &str, fix: &CommitId) -> String {
    match tool {
        ToolName::Show if raw.starts_with(&format!("commit {fix}\n")) => {
            let (head, diff) = match raw.find("\ndiff --git ") {
                Some(i) => raw.split_at(i + 1),
                None => (raw, ""),
            };
            let mut out = redact_leakage(head);
            out.push_str(diff);
            out
        }
        ToolName::Blame if raw.contains(fix.as_str()) => {
            let mut out = String::with_capacity(raw.len());
            let mut in_fix = false;
            for line in raw.split_inclusive('\n') {
                if !line.starts_with('\t') && line.len() > 40 && line.as_bytes()[40] == b' ' {
                    in_fix = line.starts_with(fix.as_str());
                }
                if in_fix && line.starts_with("summary ") {
                    out.push_str(&redact_leakage(line));
                } else {
                    out.push_str(line);
                }
            }
            out
        }
        _ => raw.to_string(),
    }
}

/// Formatting stage only; what `bictrace tool --raw` prints.
pub fn format_raw(ctx: &ToolContext, args: &ToolArgs, raw: &str, cfg: &CompressionConfig) -> Formatted {
    match args {
        ToolArgs::Show(_) => format_show(raw, cfg),
        ToolArgs::Blame(_) => format_blame(raw, cfg).unwrap_or_else(|e| Formatted {
            body: format!("Error from git_blame: {e}.\n"),
            cut: None,
        }),
        ToolArgs::LogS(_) => format_log(raw, ToolName::LogS, cfg),
        ToolArgs::LogFunc(_) => format_log(raw, ToolName::LogFunc, cfg),
        ToolArgs::Grep(g) => format_grep(raw, &grep_revision(ctx, g), cfg),
    }
}

/// Bound enforcement, cache, execution, formatting and extraction.
/// Failures come back as observation text; timeouts are never cached.
pub fn execute_compressed(
    ctx: &ToolContext,
    args: &ToolArgs,
    fix_date: Timestamp,
    cache: &mut CallCache,
    cfg: &CompressionConfig,
    fix_id: Option<&CommitId>,
) -> Observation {
    let args = enforce_search_bound(args.clone(), fix_date);
    let tool = args.tool();
    let (raw, cache_hit) = match cache.get(&args) {
        Some(hit) => (hit.clone(), true),
        None => match exec_tool(ctx, &args) {
            Ok(text) => {
                let text = match fix_id {
                    Some(fix) => redact_fix_commit(tool, &text, fix),
                    None => text,
                };
                let raw = RawOutput::Text(text);
                cache.store(&args, raw.clone());
                (raw, false)
            }
            Err(ToolError::Timeout(d)) => {
                return Observation {
                    text: timeout_observation(tool, d.as_secs_f64()),
                    truncated: false,
                    cache_hit: false,
                    source_tool: tool,
                }
            }
            Err(e) => {
                let raw = RawOutput::Failure(error_text(tool, &e));
                if e.is_deterministic() {
                    cache.store(&args, raw.clone());
                }
                (raw, false)
            }
        },
    };
    match raw {
        RawOutput::Failure(text) => Observation {
            text,
            truncated: false,
            cache_hit,
            source_tool: tool,
        },
        RawOutput::Text(text) => {
            let formatted = format_raw(ctx, &args, &text, cfg);
            let (mut text, truncated) = compress_formatted(tool, &formatted, cfg);
            if text.trim().is_empty() {
                text = format!("{tool}: no results.");
            }
            Observation {
                text,
                truncated,
                cache_hit,
                source_tool: tool,
            }
        }
    }
}
