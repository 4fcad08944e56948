//! Loading the fixing commit and building the first prompt.

use bictrace_core::compress::{strip_trailers, DEFAULT_TRAILER_KEYS};
use bictrace_core::diff::{parse_unified_diff, removed_lines};
use bictrace_core::prompt::{assemble_initial_context, FixContext, InitialContext, TemplateSlotMissing};
use bictrace_core::redact::redact_leakage;
use bictrace_core::resolve::RefLookup;
use bictrace_core::tools::tool_schemas;
use bictrace_core::CommitId;
use serde::{Deserialize, Serialize};

use crate::gateway::{GitError, RepoHandle};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateMode {
    #[default]
    Committer,
    Author,
}

#[derive(Debug, thiserror::Error)]
pub enum PrepError {
    #[error("fix commit {0:?} not found")]
    CommitNotFound(String),
    #[error("fix commit {0:?} is ambiguous")]
    Ambiguous(String),
    #[error("fix commit {0} is a root commit")]
    RootCommit(CommitId),
    #[error(transparent)]
    Template(#[from] TemplateSlotMissing),
    #[error(transparent)]
    Git(#[from] GitError),
}

/// Prompt templates; defaults are the shipped assets.
#[derive(Debug, Clone)]
pub struct Templates {
    pub system: String,
    pub case: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            system: bictrace_core::prompt::SYSTEM_PROMPT.to_string(),
            case: bictrace_core::prompt::CASE_PROMPT.to_string(),
        }
    }
}

pub fn resolve_fix(repo: &RepoHandle, fix: &str) -> Result<CommitId, PrepError> {
    match repo.lookup(fix)? {
        RefLookup::Found(id) => Ok(id),
        RefLookup::NotFound => Err(PrepError::CommitNotFound(fix.to_string())),
        RefLookup::Ambiguous => Err(PrepError::Ambiguous(fix.to_string())),
    }
}

/// Diff of `fix` against `parent` with three lines of context.
pub fn fix_diff(repo: &RepoHandle, parent: &CommitId, fix: &CommitId) -> Result<String, GitError> {
    repo.run_ok(&[
        "diff",
        "--no-color",
        "--no-ext-diff",
        "--no-textconv",
        "-M",
        "-U3",
        "--end-of-options",
        parent.as_str(),
        fix.as_str(),
    ])
}

pub fn load_fix_context(repo: &RepoHandle, fix: &str, mode: DateMode) -> Result<FixContext, PrepError> {
    let fix_id = resolve_fix(repo, fix)?;
    let meta = repo.run_ok(&[
        "show",
        "-s",
        "--no-notes",
        "--format=%P%n%ct%n%at%n%an <%ae>%n%B",
        "--end-of-options",
        fix_id.as_str(),
    ])?;
    let mut lines = meta.splitn(5, '\n');
    let parents: Vec<CommitId> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .filter_map(|p| CommitId::parse(p).ok())
        .collect();
    let committer: i64 = lines.next().unwrap_or("").trim().parse().map_err(|_| PrepError::CommitNotFound(fix.into()))?;
    let author_ts: i64 = lines.next().unwrap_or("").trim().parse().map_err(|_| PrepError::CommitNotFound(fix.into()))?;
    let author = lines.next().unwrap_or("").trim().to_string();
    let message = lines.next().unwrap_or("");
    let Some(parent) = parents.first().cloned() else {
        return Err(PrepError::RootCommit(fix_id));
    };
    let diff_text = fix_diff(repo, &parent, &fix_id)?;
    let files = parse_unified_diff(&diff_text);
    let changed_files = files.iter().map(|f| f.path().to_string()).collect();
    let keys: Vec<String> = DEFAULT_TRAILER_KEYS.iter().map(|s| s.to_string()).collect();
    Ok(FixContext {
        fix_id,
        fix_parent: parent,
        fix_date: match mode {
            DateMode::Committer => committer,
            DateMode::Author => author_ts,
        },
        author,
        message_redacted: strip_trailers(&redact_leakage(message), &keys),
        diff_text,
        changed_files,
        deleted_or_modified_lines: removed_lines(&files),
    })
}

pub fn build_initial_context(fc: &FixContext, templates: &Templates) -> Result<InitialContext, TemplateSlotMissing> {
    assemble_initial_context(fc, &tool_schemas(), &templates.system, &templates.case)
}
