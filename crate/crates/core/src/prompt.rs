//! Case inputs and initial-context assembly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::commit::CommitId;
use crate::time::{format_iso, Timestamp};
use crate::tools::ToolSchema;

pub const SYSTEM_PROMPT: &str = include_str!("../assets/system_prompt.txt");
pub const CASE_PROMPT: &str = include_str!("../assets/case_prompt.txt");

pub const SLOT_FIX_BLOCK: &str = "FIX_BLOCK";
pub const SLOT_CONSTRAINTS: &str = "CONSTRAINTS";

/// One evaluation unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub repo: String,
    pub fix_commit: String,
    #[serde(default)]
    pub ground_truth: Vec<CommitId>,
    #[serde(default)]
    pub dataset_tag: String,
}

/// Everything the investigation knows about the fix before the first turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixContext {
    pub fix_id: CommitId,
    pub fix_parent: CommitId,
    pub fix_date: Timestamp,
    pub author: String,
    pub message_redacted: String,
    pub diff_text: String,
    pub changed_files: Vec<String>,
    pub deleted_or_modified_lines: BTreeMap<String, Vec<(u32, String)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialContext {
    pub system_prompt: String,
    pub tool_specs: Vec<ToolSchema>,
    pub fix_block: String,
    pub constraints_block: String,
    /// The case template rendered with both blocks; the first user message.
    pub user_prompt: String,
}

impl InitialContext {
    /// Every piece of text the model receives before its first turn.
    pub fn all_text(&self) -> String {
        let mut s = String::new();
        for part in [&self.system_prompt, &self.fix_block, &self.constraints_block, &self.user_prompt] {
            s.push_str(part);
            s.push('\n');
        }
        for spec in &self.tool_specs {
            s.push_str(&serde_json::to_string(&spec.to_wire()).unwrap_or_default());
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("prompt template is missing the {{{{{0}}}}} slot")]
pub struct TemplateSlotMissing(pub String);

/// Substitute `{{NAME}}` slots. Every name in `values` must occur.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> Result<String, TemplateSlotMissing> {
    for (name, _) in values {
        if !template.contains(&format!("{{{{{name}}}}}")) {
            return Err(TemplateSlotMissing(name.to_string()));
        }
    }
    // Single pass, so slot-like text inside values is never expanded.
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let filled = after.find("}}").and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(n, _)| *n == name).map(|(_, v)| (close, *v))
        });
        match filled {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 2..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Rendering of the fix for the model. The parent id is deliberately absent:
/// tools default to it, and for some datasets it coincides with the answer.
pub fn render_fix_block(fc: &FixContext) -> String {
    let mut s = String::new();
    s.push_str(&format!("Fixing commit: {}\n", fc.fix_id));
    s.push_str(&format!("Committed: {}\n", format_iso(fc.fix_date)));
    if !fc.author.is_empty() {
        s.push_str(&format!("Author: {}\n", fc.author));
    }
    s.push_str("\nMessage:\n");
    for line in fc.message_redacted.trim_end().lines() {
        s.push_str("    ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str("\nChanged files:\n");
    for f in &fc.changed_files {
        s.push_str(&format!("  {f}\n"));
    }
    if fc.deleted_or_modified_lines.is_empty() {
        s.push_str("\nThe fix deletes or modifies no existing lines (it only adds code).\n");
    }
    s.push_str("\nDiff against the parent of the fixing commit:\n");
    s.push_str(&fc.diff_text);
    if !fc.diff_text.ends_with('\n') {
        s.push('\n');
    }
    s
}

pub fn render_constraints(fc: &FixContext) -> String {
    format!(
        "- All history searches are bounded by the fix date {} (epoch {}); git_log_s and git_log_func never return later commits.\n\
         - git_blame and git_grep default to the parent of the fixing commit.\n\
         - The bug-inducing commit predates the fixing commit.\n",
        format_iso(fc.fix_date),
        fc.fix_date
    )
}

pub fn assemble_initial_context(
    fc: &FixContext,
    schemas: &[ToolSchema],
    system_template: &str,
    case_template: &str,
) -> Result<InitialContext, TemplateSlotMissing> {
    let fix_block = render_fix_block(fc);
    let constraints_block = render_constraints(fc);
    let user_prompt = render_template(
        case_template,
        &[(SLOT_FIX_BLOCK, &fix_block), (SLOT_CONSTRAINTS, &constraints_block)],
    )?;
    Ok(InitialContext {
        system_prompt: system_template.to_string(),
        tool_specs: schemas.to_vec(),
        fix_block,
        constraints_block,
        user_prompt,
    })
}
