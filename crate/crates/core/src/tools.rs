//! The five investigation tools: names, typed arguments, function-calling
//! schemas, argument validation and the temporal search bound.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::time::{format_iso, parse_date_bound, DayEdge, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolName {
    #[serde(rename = "git_show")]
    Show,
    #[serde(rename = "git_blame")]
    Blame,
    #[serde(rename = "git_log_s")]
    LogS,
    #[serde(rename = "git_log_func")]
    LogFunc,
    #[serde(rename = "git_grep")]
    Grep,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::Show,
        ToolName::Blame,
        ToolName::LogS,
        ToolName::LogFunc,
        ToolName::Grep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::Show => "git_show",
            ToolName::Blame => "git_blame",
            ToolName::LogS => "git_log_s",
            ToolName::LogFunc => "git_log_func",
            ToolName::Grep => "git_grep",
        }
    }

    /// Whether the tool walks history and is therefore subject to the fix-date bound.
    pub fn is_temporal(self) -> bool {
        matches!(self, ToolName::LogS | ToolName::LogFunc)
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ArgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ArgError::UnknownTool(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShowArgs {
    pub commit: String,
    pub file_filter: Option<String>,
    pub stat_only: bool,
    pub context_lines: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlameArgs {
    pub file_path: String,
    pub commit: Option<String>,
    pub line_start: Option<u32>,
    pub line_end: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogSArgs {
    pub search_string: String,
    pub path: Option<String>,
    pub after: Option<Timestamp>,
    pub before: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFuncArgs {
    pub function_name: String,
    pub file_path: String,
    pub after: Option<Timestamp>,
    pub before: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrepArgs {
    pub search_string: String,
    pub commit: Option<String>,
    pub path: Option<String>,
}

/// Validated arguments for one tool invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolArgs {
    Show(ShowArgs),
    Blame(BlameArgs),
    LogS(LogSArgs),
    LogFunc(LogFuncArgs),
    Grep(GrepArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArgError {
    #[error("unknown tool {0:?}; available tools: git_show, git_blame, git_log_s, git_log_func, git_grep")]
    UnknownTool(String),
    #[error("{tool}: arguments must be a JSON object")]
    NotAnObject { tool: ToolName },
    #[error("{tool}: missing required parameter {field:?}")]
    MissingRequired { tool: ToolName, field: &'static str },
    #[error("{tool}: unknown parameter {field:?}; allowed: {allowed}")]
    UnknownField {
        tool: ToolName,
        field: String,
        allowed: String,
    },
    #[error("{tool}: parameter {field:?} must be a {expected}")]
    WrongType {
        tool: ToolName,
        field: &'static str,
        expected: &'static str,
    },
    #[error("{tool}: parameter {field:?} is invalid: {reason}")]
    InvalidValue {
        tool: ToolName,
        field: &'static str,
        reason: String,
    },
}

/// One parameter of a tool schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub required: bool,
    pub description: String,
}

/// Function-calling description of one tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: ToolName,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

impl ToolSchema {
    /// The `{"type": "function", "function": {...}}` object understood by
    /// chat-completions endpoints.
    pub fn to_wire(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in &self.parameters {
            properties.insert(
                p.name.clone(),
                json!({ "type": p.kind, "description": p.description }),
            );
            if p.required {
                required.push(Value::String(p.name.clone()));
            }
        }
        json!({
            "type": "function",
            "function": {
                "name": self.name.as_str(),
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                    "additionalProperties": false,
                }
            }
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

fn param(name: &str, kind: &str, required: bool, description: &str) -> ParamSpec {
    ParamSpec {
        name: name.to_owned(),
        kind: kind.to_owned(),
        required,
        description: description.to_owned(),
    }
}

const DATE_HINT: &str = "ISO-8601 date (YYYY-MM-DD) or datetime";

pub fn tool_schemas() -> Vec<ToolSchema> {
    ToolName::ALL.into_iter().map(schema_for).collect()
}

pub fn schema_for(tool: ToolName) -> ToolSchema {
    let (description, parameters) = match tool {
        ToolName::Show => (
            "Show a commit's metadata, message and diff. Use it to decide whether a candidate \
             commit introduced logic or only refactored or moved code.",
            alloc::vec![
                param("commit", "string", true, "Commit id or revision expression to show."),
                param("file_filter", "string", false, "Restrict the diff to paths matching this pathspec."),
                param("stat_only", "boolean", false, "Only list changed files with added/deleted line counts."),
                param("context_lines", "integer", false, "Unified diff context width (default 3)."),
            ],
        ),
        ToolName::Blame => (
            "Attribute each line of a file to the commit that last changed it. Defaults to the \
             parent of the bug-fixing commit.",
            alloc::vec![
                param("file_path", "string", true, "Path of the file to blame."),
                param("commit", "string", false, "Revision to blame at (default: parent of the fix)."),
                param("line_start", "integer", false, "First line to blame (1-based)."),
                param("line_end", "integer", false, "Last line to blame (inclusive)."),
            ],
        ),
        ToolName::LogS => (
            "Pickaxe search: list commits that changed the number of occurrences of a literal \
             string. Results never extend past the fix commit date.",
            alloc::vec![
                param("search_string", "string", true, "Literal string, usually an identifier."),
                param("path", "string", false, "Restrict to paths matching this pathspec."),
                param("after", "string", false, DATE_HINT),
                param("before", "string", false, DATE_HINT),
            ],
        ),
        ToolName::LogFunc => (
            "Function-level history: every commit that touched the named function, with inline \
             diffs. Results never extend past the fix commit date.",
            alloc::vec![
                param("function_name", "string", true, "Name of the function."),
                param("file_path", "string", true, "File that defines the function."),
                param("after", "string", false, DATE_HINT),
                param("before", "string", false, DATE_HINT),
            ],
        ),
        ToolName::Grep => (
            "Search the source tree at one revision for a literal string to find definitions, \
             call sites and cross-file references. Defaults to the parent of the fix.",
            alloc::vec![
                param("search_string", "string", true, "Literal string to search for."),
                param("commit", "string", false, "Revision to search (default: parent of the fix)."),
                param("path", "string", false, "Restrict to paths matching this pathspec."),
            ],
        ),
    };
    ToolSchema {
        name: tool,
        description: description.to_owned(),
        parameters,
    }
}

impl ToolArgs {
    pub fn tool(&self) -> ToolName {
        match self {
            ToolArgs::Show(_) => ToolName::Show,
            ToolArgs::Blame(_) => ToolName::Blame,
            ToolArgs::LogS(_) => ToolName::LogS,
            ToolArgs::LogFunc(_) => ToolName::LogFunc,
            ToolArgs::Grep(_) => ToolName::Grep,
        }
    }

    /// Validate a model-issued call against the schema of `tool`.
    pub fn from_json(tool: ToolName, value: &Value) -> Result<ToolArgs, ArgError> {
        let empty = Map::new();
        let obj = match value {
            Value::Object(m) => m,
            Value::Null => &empty,
            _ => return Err(ArgError::NotAnObject { tool }),
        };
        let schema = schema_for(tool);
        for key in obj.keys() {
            if schema.param(key).is_none() {
                let allowed = schema
                    .parameters
                    .iter()
                    .map(|p| p.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(ArgError::UnknownField {
                    tool,
                    field: key.clone(),
                    allowed,
                });
            }
        }
        let r = Reader { tool, obj };
        let args = match tool {
            ToolName::Show => ToolArgs::Show(ShowArgs {
                commit: r.revision("commit")?.ok_or(r.missing("commit"))?,
                file_filter: r.path("file_filter")?,
                stat_only: r.flag("stat_only")?.unwrap_or(false),
                context_lines: r.count("context_lines", 0)?,
            }),
            ToolName::Blame => {
                let line_start = r.count("line_start", 1)?;
                let line_end = r.count("line_end", 1)?;
                if let (Some(a), Some(b)) = (line_start, line_end) {
                    if a > b {
                        return Err(ArgError::InvalidValue {
                            tool,
                            field: "line_end",
                            reason: format!("line_end ({b}) is before line_start ({a})"),
                        });
                    }
                }
                ToolArgs::Blame(BlameArgs {
                    file_path: r.path("file_path")?.ok_or(r.missing("file_path"))?,
                    commit: r.revision("commit")?,
                    line_start,
                    line_end,
                })
            }
            ToolName::LogS => ToolArgs::LogS(LogSArgs {
                search_string: r.needle("search_string")?.ok_or(r.missing("search_string"))?,
                path: r.path("path")?,
                after: r.date("after", DayEdge::Start)?,
                before: r.date("before", DayEdge::End)?,
            }),
            ToolName::LogFunc => {
                let function_name = r.needle("function_name")?.ok_or(r.missing("function_name"))?;
                if function_name.contains(':') {
                    return Err(ArgError::InvalidValue {
                        tool,
                        field: "function_name",
                        reason: "must be a bare function name without ':'".to_string(),
                    });
                }
                ToolArgs::LogFunc(LogFuncArgs {
                    function_name,
                    file_path: r.path("file_path")?.ok_or(r.missing("file_path"))?,
                    after: r.date("after", DayEdge::Start)?,
                    before: r.date("before", DayEdge::End)?,
                })
            }
            ToolName::Grep => ToolArgs::Grep(GrepArgs {
                search_string: r.needle("search_string")?.ok_or(r.missing("search_string"))?,
                commit: r.revision("commit")?,
                path: r.path("path")?,
            }),
        };
        Ok(args)
    }

    /// Normalised JSON form; `from_json(tool, to_json())` reproduces `self`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let s = |v: &Option<String>| v.as_ref().map(|x| Value::String(x.clone()));
        let d = |v: &Option<Timestamp>| v.map(|x| Value::String(format_iso(x)));
        match self {
            ToolArgs::Show(a) => {
                put("commit", Some(Value::String(a.commit.clone())));
                put("file_filter", s(&a.file_filter));
                put("stat_only", a.stat_only.then_some(Value::Bool(true)));
                put("context_lines", a.context_lines.map(Value::from));
            }
            ToolArgs::Blame(a) => {
                put("file_path", Some(Value::String(a.file_path.clone())));
                put("commit", s(&a.commit));
                put("line_start", a.line_start.map(Value::from));
                put("line_end", a.line_end.map(Value::from));
            }
            ToolArgs::LogS(a) => {
                put("search_string", Some(Value::String(a.search_string.clone())));
                put("path", s(&a.path));
                put("after", d(&a.after));
                put("before", d(&a.before));
            }
            ToolArgs::LogFunc(a) => {
                put("function_name", Some(Value::String(a.function_name.clone())));
                put("file_path", Some(Value::String(a.file_path.clone())));
                put("after", d(&a.after));
                put("before", d(&a.before));
            }
            ToolArgs::Grep(a) => {
                put("search_string", Some(Value::String(a.search_string.clone())));
                put("commit", s(&a.commit));
                put("path", s(&a.path));
            }
        }
        Value::Object(m)
    }

    /// `before` of a temporal tool, if any.
    pub fn before(&self) -> Option<Timestamp> {
        match self {
            ToolArgs::LogS(a) => a.before,
            ToolArgs::LogFunc(a) => a.before,
            _ => None,
        }
    }
}

/// Cap `before` of history-walking tools at the fix date. A missing `before`
/// is filled in, so no search can see commits later than the fix.
pub fn enforce_search_bound(args: ToolArgs, fix_date: Timestamp) -> ToolArgs {
    let cap = |before: Option<Timestamp>| Some(before.map_or(fix_date, |b| b.min(fix_date)));
    match args {
        ToolArgs::LogS(mut a) => {
            a.before = cap(a.before);
            ToolArgs::LogS(a)
        }
        ToolArgs::LogFunc(mut a) => {
            a.before = cap(a.before);
            ToolArgs::LogFunc(a)
        }
        other => other,
    }
}

struct Reader<'a> {
    tool: ToolName,
    obj: &'a Map<String, Value>,
}

impl Reader<'_> {
    fn missing(&self, field: &'static str) -> ArgError {
        ArgError::MissingRequired {
            tool: self.tool,
            field,
        }
    }

    fn invalid(&self, field: &'static str, reason: &str) -> ArgError {
        ArgError::InvalidValue {
            tool: self.tool,
            field,
            reason: reason.to_string(),
        }
    }

    fn get(&self, field: &'static str) -> Option<&Value> {
        match self.obj.get(field) {
            None | Some(Value::Null) => None,
            Some(v) => Some(v),
        }
    }

    fn string(&self, field: &'static str) -> Result<Option<String>, ArgError> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(ArgError::WrongType {
                tool: self.tool,
                field,
                expected: "string",
            }),
        }
    }

    /// Revision text: passed to git as a positional argument, so it must not
    /// look like an option.
    fn revision(&self, field: &'static str) -> Result<Option<String>, ArgError> {
        let Some(s) = self.string(field)? else {
            return Ok(None);
        };
        let s = s.trim().to_string();
        if s.starts_with('-') {
            return Err(self.invalid(field, "revisions may not start with '-'"));
        }
        if s.chars().any(|c| c.is_whitespace() || c.is_control()) || s.len() > 256 {
            return Err(self.invalid(field, "not a revision"));
        }
        Ok(Some(s))
    }

    fn path(&self, field: &'static str) -> Result<Option<String>, ArgError> {
        let Some(s) = self.string(field)? else {
            return Ok(None);
        };
        if s.chars().any(|c| c == '\0' || c == '\n') {
            return Err(self.invalid(field, "paths may not contain NUL or newlines"));
        }
        Ok(Some(s.trim().to_string()))
    }

    fn needle(&self, field: &'static str) -> Result<Option<String>, ArgError> {
        let Some(s) = self.string(field)? else {
            return Ok(None);
        };
        if s.contains('\n') || s.contains('\0') {
            return Err(self.invalid(field, "must be a single line"));
        }
        Ok(Some(s))
    }

    fn flag(&self, field: &'static str) -> Result<Option<bool>, ArgError> {
        match self.get(field) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(Value::String(s)) if s == "true" => Ok(Some(true)),
            Some(Value::String(s)) if s == "false" => Ok(Some(false)),
            Some(_) => Err(ArgError::WrongType {
                tool: self.tool,
                field,
                expected: "boolean",
            }),
        }
    }

    fn count(&self, field: &'static str, min: u32) -> Result<Option<u32>, ArgError> {
        let n = match self.get(field) {
            None => return Ok(None),
            Some(Value::Number(n)) => n.as_u64(),
            Some(Value::String(s)) => s.trim().parse::<u64>().ok(),
            Some(_) => None,
        };
        match n {
            Some(n) if n >= u64::from(min) && n <= u64::from(u32::MAX) => Ok(Some(n as u32)),
            Some(_) => Err(self.invalid(field, &format!("must be at least {min}"))),
            None => Err(ArgError::WrongType {
                tool: self.tool,
                field,
                expected: "non-negative integer",
            }),
        }
    }

    fn date(&self, field: &'static str, edge: DayEdge) -> Result<Option<Timestamp>, ArgError> {
        match self.string(field)? {
            None => Ok(None),
            Some(s) => parse_date_bound(&s, edge)
                .map(Some)
                .map_err(|e| self.invalid(field, &e.to_string())),
        }
    }
}
