//! Case-local call cache keyed by tool name and canonicalised arguments.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::tools::{ToolArgs, ToolName};

/// Context width git uses when none is requested; elided from cache keys so
/// that an explicit default and an omitted value collide.
pub const DEFAULT_CONTEXT_LINES: u32 = 3;

/// Deterministic cache key for a validated call. Fields appear in a fixed
/// order, absent optionals and defaults are elided and dates are rendered as
/// epoch seconds.
pub fn canonicalize_args(args: &ToolArgs) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            parts.push(format!("{k}={}", escape(&v)));
        }
    };
    match args {
        ToolArgs::Show(a) => {
            push("commit", Some(a.commit.clone()));
            push("context_lines", a.context_lines.filter(|&c| c != DEFAULT_CONTEXT_LINES).map(|c| format!("{c}")));
            push("file_filter", a.file_filter.clone());
            push("stat_only", a.stat_only.then(|| String::from("true")));
        }
        ToolArgs::Blame(a) => {
            push("commit", a.commit.clone());
            push("file_path", Some(a.file_path.clone()));
            push("line_end", a.line_end.map(|n| format!("{n}")));
            push("line_start", a.line_start.map(|n| format!("{n}")));
        }
        ToolArgs::LogS(a) => {
            push("after", a.after.map(|t| format!("{t}")));
            push("before", a.before.map(|t| format!("{t}")));
            push("path", a.path.clone());
            push("search_string", Some(a.search_string.clone()));
        }
        ToolArgs::LogFunc(a) => {
            push("after", a.after.map(|t| format!("{t}")));
            push("before", a.before.map(|t| format!("{t}")));
            push("file_path", Some(a.file_path.clone()));
            push("function_name", Some(a.function_name.clone()));
        }
        ToolArgs::Grep(a) => {
            push("commit", a.commit.clone());
            push("path", a.path.clone());
            push("search_string", Some(a.search_string.clone()));
        }
    }
    format!("{}({})", args.tool(), parts.join(","))
}

fn escape(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for c in v.chars() {
        match c {
            '\\' | ',' | '(' | ')' | '=' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

/// What a tool produced before formatting. Timeouts are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawOutput {
    Text(String),
    /// A deterministic failure such as an unknown revision, kept so the agent
    /// sees the same error text on a repeated call.
    Failure(String),
}

#[derive(Debug, Default, Clone)]
pub struct CallCache {
    entries: BTreeMap<(ToolName, String), RawOutput>,
    hits: u64,
}

impl CallCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, args: &ToolArgs) -> Option<&RawOutput> {
        let key = (args.tool(), canonicalize_args(args));
        let found = self.entries.get(&key);
        if found.is_some() {
            self.hits += 1;
        }
        found
    }

    pub fn store(&mut self, args: &ToolArgs, raw: RawOutput) {
        self.entries.insert((args.tool(), canonicalize_args(args)), raw);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{BlameArgs, ShowArgs};
    use serde_json::json;

    #[test]
    fn default_elision() {
        let a = ToolArgs::from_json(ToolName::Show, &json!({"commit":"abc","stat_only":false})).unwrap();
        let b = ToolArgs::from_json(ToolName::Show, &json!({"commit":"abc"})).unwrap();
        let c = ToolArgs::from_json(ToolName::Show, &json!({"commit":"abc","context_lines":3})).unwrap();
        assert_eq!(canonicalize_args(&a), canonicalize_args(&b));
        assert_eq!(canonicalize_args(&a), canonicalize_args(&c));
    }

    #[test]
    fn line_ranges_distinguish_keys() {
        let mk = |s, e| {
            ToolArgs::Blame(BlameArgs {
                file_path: "a.c".into(),
                commit: None,
                line_start: Some(s),
                line_end: Some(e),
            })
        };
        assert_ne!(canonicalize_args(&mk(1, 5)), canonicalize_args(&mk(1, 6)));
    }

    #[test]
    fn field_order_is_irrelevant() {
        let a: serde_json::Value =
            serde_json::from_str(r#"{"file_path":"a.c","line_start":2,"commit":"HEAD"}"#).unwrap();
        let b: serde_json::Value =
            serde_json::from_str(r#"{"commit":"HEAD","line_start":2,"file_path":"a.c"}"#).unwrap();
        let a = ToolArgs::from_json(ToolName::Blame, &a).unwrap();
        let b = ToolArgs::from_json(ToolName::Blame, &b).unwrap();
        assert_eq!(canonicalize_args(&a), canonicalize_args(&b));
    }

    #[test]
    fn separators_inside_values_cannot_forge_keys() {
        let a = ToolArgs::Show(ShowArgs {
            commit: "x,file_filter=y".into(),
            file_filter: None,
            stat_only: false,
            context_lines: None,
        });
        let b = ToolArgs::Show(ShowArgs {
            commit: "x".into(),
            file_filter: Some("y".into()),
            stat_only: false,
            context_lines: None,
        });
        assert_ne!(canonicalize_args(&a), canonicalize_args(&b));
    }

    #[test]
    fn lookup_after_store_is_verbatim() {
        let args = ToolArgs::from_json(ToolName::Grep, &json!({"search_string":"foo"})).unwrap();
        let mut cache = CallCache::new();
        assert!(cache.get(&args).is_none());
        cache.store(&args, RawOutput::Text("a:1:foo\n".into()));
        assert_eq!(cache.get(&args), Some(&RawOutput::Text("a:1:foo\n".into())));
        assert_eq!(cache.hits(), 1);
    }
}
