//! The five investigation tools as single git invocations.

use std::time::Duration;

use bictrace_core::tools::{BlameArgs, GrepArgs, LogFuncArgs, LogSArgs, ShowArgs};
use bictrace_core::{CommitId, ToolArgs};

use crate::gateway::{GitError, GitOutcome, GitStatus, RepoHandle};

/// Per-case tool settings.
#[derive(Debug, Clone)]
pub struct ToolContext {
    pub repo: RepoHandle,
    /// Revision used by blame and grep when no `commit` is given, and the
    /// starting point of both log tools: the fix commit's first parent.
    pub default_commit: String,
    pub timeout: Duration,
    /// Follow renames in single-file pickaxe searches.
    pub follow_renames: bool,
}

impl ToolContext {
    pub fn new(repo: RepoHandle, default_commit: &CommitId) -> Self {
        let timeout = repo.default_timeout();
        ToolContext {
            repo,
            default_commit: default_commit.to_string(),
            timeout,
            follow_renames: true,
        }
    }

    /// Context without a case: tools default to `HEAD`.
    pub fn at_head(repo: RepoHandle) -> Self {
        let timeout = repo.default_timeout();
        ToolContext {
            repo,
            default_commit: "HEAD".into(),
            timeout,
            follow_renames: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("commit {0:?} not found in the repository")]
    CommitNotFound(String),
    #[error("file {path:?} does not exist at revision {revision}")]
    FileNotFoundAtRevision { path: String, revision: String },
    #[error("function {function:?} not found in {file}")]
    FunctionNotFound { function: String, file: String },
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("git reported an error: {0}")]
    Git(String),
    #[error(transparent)]
    Gateway(#[from] GitError),
}

impl ToolError {
    /// Deterministic failures that are safe to cache.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, ToolError::Timeout(_) | ToolError::Gateway(_))
    }
}

fn revision_missing(stderr: &str) -> bool {
    stderr.contains("bad revision")
        || stderr.contains("unknown revision")
        || stderr.contains("bad object")
        || stderr.contains("invalid object name")
        || stderr.contains("unable to resolve revision")
        || stderr.contains("Needed a single revision")
        || stderr.contains("not a valid object name")
        || stderr.contains("is ambiguous")
}

fn first_fatal(stderr: &str) -> String {
    stderr
        .lines()
        .find(|l| l.starts_with("fatal:") || l.starts_with("error:"))
        .unwrap_or(stderr.trim())
        .to_string()
}

fn finish(o: GitOutcome, timeout: Duration, classify: impl Fn(&str) -> Option<ToolError>) -> Result<String, ToolError> {
    match o.status {
        GitStatus::Ok => Ok(o.stdout),
        GitStatus::TimedOut => Err(ToolError::Timeout(timeout)),
        GitStatus::NonZeroExit(_) => Err(classify(&o.stderr).unwrap_or_else(|| ToolError::Git(first_fatal(&o.stderr)))),
    }
}

fn epoch_flag(name: &str, ts: Option<i64>) -> Option<String> {
    ts.map(|t| format!("--{name}=@{t}"))
}

pub const SHOW_FORMAT: &str = "--format=commit %H%nParents: %P%nAuthor: %an <%ae>%nDate: %cI%n%n%B";

pub fn exec_git_show(ctx: &ToolContext, a: &ShowArgs) -> Result<String, ToolError> {
    let unified = format!("-U{}", a.context_lines.unwrap_or(3));
    let mut args = vec!["show", "--no-color", "--no-ext-diff", "--no-textconv", "--no-notes", "-M", SHOW_FORMAT];
    if a.stat_only {
        args.push("--numstat");
    } else {
        args.push(&unified);
    }
    args.extend(["--end-of-options", a.commit.as_str(), "--"]);
    if let Some(f) = &a.file_filter {
        args.push(f);
    }
    let o = ctx.repo.run_git(&args, ctx.timeout)?;
    finish(o, ctx.timeout, |e| revision_missing(e).then(|| ToolError::CommitNotFound(a.commit.clone())))
}

pub fn exec_git_blame(ctx: &ToolContext, a: &BlameArgs) -> Result<String, ToolError> {
    let rev = a.commit.clone().unwrap_or_else(|| ctx.default_commit.clone());
    let range = match (a.line_start, a.line_end) {
        (Some(s), Some(e)) => Some(format!("-L{s},{e}")),
        (Some(s), None) => Some(format!("-L{s},")),
        (None, Some(e)) => Some(format!("-L1,{e}")),
        (None, None) => None,
    };
    let mut args = vec!["blame", "--porcelain"];
    if let Some(r) = &range {
        args.push(r);
    }
    args.extend([rev.as_str(), "--", a.file_path.as_str()]);
    let o = ctx.repo.run_git(&args, ctx.timeout)?;
    finish(o, ctx.timeout, |e| {
        if e.contains("no such path") {
            Some(ToolError::FileNotFoundAtRevision {
                path: a.file_path.clone(),
                revision: rev.clone(),
            })
        } else if revision_missing(e) {
            Some(ToolError::CommitNotFound(rev.clone()))
        } else {
            None
        }
    })
}

fn looks_like_single_file(path: &str) -> bool {
    !path.is_empty()
        && !path.contains(['*', '?', '[', ':'])
        && !path.ends_with('/')
        && path.rsplit('/').next().is_some_and(|last| last.contains('.'))
}

pub const LOG_S_FORMAT: &str = "--format=commit %H | %cs | %an | %s";

pub fn exec_git_log_s(ctx: &ToolContext, a: &LogSArgs) -> Result<String, ToolError> {
    let pickaxe = format!("-S{}", a.search_string);
    let before = epoch_flag("before", a.before);
    let after = epoch_flag("after", a.after);
    let mut args = vec!["log", "--no-color", "--no-ext-diff", "--no-textconv", LOG_S_FORMAT, pickaxe.as_str()];
    if let Some(b) = &before {
        args.push(b);
    }
    if let Some(af) = &after {
        args.push(af);
    }
    if ctx.follow_renames && a.path.as_deref().is_some_and(looks_like_single_file) {
        args.push("--follow");
    }
    args.extend(["--end-of-options", ctx.default_commit.as_str(), "--"]);
    if let Some(p) = &a.path {
        args.push(p);
    }
    let o = ctx.repo.run_git(&args, ctx.timeout)?;
    finish(o, ctx.timeout, |e| revision_missing(e).then(|| ToolError::CommitNotFound(ctx.default_commit.clone())))
}

/// Basic regex matching `name` as a whole identifier.
pub fn funcname_regex(name: &str) -> String {
    let mut escaped = String::new();
    for c in name.chars() {
        if matches!(c, '.' | '*' | '[' | ']' | '^' | '$' | '\\') {
            escaped.push('\\');
        }
        escaped.push(c);
    }
    format!("\\(^\\|[^A-Za-z0-9_]\\){escaped}\\([^A-Za-z0-9_]\\|$\\)")
}

pub const LOG_FUNC_FORMAT: &str = "--format=commit %H%nAuthor: %an <%ae>%nDate: %cI%n%n%B";

pub fn exec_git_log_func(ctx: &ToolContext, a: &LogFuncArgs) -> Result<String, ToolError> {
    let range = format!("-L:{}:{}", funcname_regex(&a.function_name), a.file_path);
    let before = epoch_flag("before", a.before);
    let after = epoch_flag("after", a.after);
    let mut args = vec!["log", "--no-color", "--no-ext-diff", "--no-textconv", LOG_FUNC_FORMAT, range.as_str()];
    if let Some(b) = &before {
        args.push(b);
    }
    if let Some(af) = &after {
        args.push(af);
    }
    args.extend(["--end-of-options", ctx.default_commit.as_str()]);
    let o = ctx.repo.run_git(&args, ctx.timeout)?;
    finish(o, ctx.timeout, |e| {
        if e.contains("no match") {
            Some(ToolError::FunctionNotFound {
                function: a.function_name.clone(),
                file: a.file_path.clone(),
            })
        } else if e.contains("no such path") || e.contains("There is no path") {
            Some(ToolError::FileNotFoundAtRevision {
                path: a.file_path.clone(),
                revision: ctx.default_commit.clone(),
            })
        } else if revision_missing(e) {
            Some(ToolError::CommitNotFound(ctx.default_commit.clone()))
        } else {
            None
        }
    })
}

pub fn exec_git_grep(ctx: &ToolContext, a: &GrepArgs) -> Result<String, ToolError> {
    let rev = a.commit.clone().unwrap_or_else(|| ctx.default_commit.clone());
    let pattern = format!("-e{}", a.search_string);
    let mut args = vec!["grep", "-n", "-I", "-F", "--no-color", pattern.as_str(), rev.as_str(), "--"];
    if let Some(p) = &a.path {
        args.push(p);
    }
    let o = ctx.repo.run_git(&args, ctx.timeout)?;
    if o.status == GitStatus::NonZeroExit(1) && o.stderr.trim().is_empty() {
        return Ok(String::new());
    }
    finish(o, ctx.timeout, |e| revision_missing(e).then(|| ToolError::CommitNotFound(rev.clone())))
}

/// Revision prefix `git grep` puts in front of each match.
pub fn grep_revision(ctx: &ToolContext, a: &GrepArgs) -> String {
    a.commit.clone().unwrap_or_else(|| ctx.default_commit.clone())
}

/// Run one tool. Exactly one git process is spawned.
pub fn exec_tool(ctx: &ToolContext, args: &ToolArgs) -> Result<String, ToolError> {
    match args {
        ToolArgs::Show(a) => exec_git_show(ctx, a),
        ToolArgs::Blame(a) => exec_git_blame(ctx, a),
        ToolArgs::LogS(a) => exec_git_log_s(ctx, a),
        ToolArgs::LogFunc(a) => exec_git_log_func(ctx, a),
        ToolArgs::Grep(a) => exec_git_grep(ctx, a),
    }
}
