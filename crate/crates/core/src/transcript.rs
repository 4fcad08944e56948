//! Conversation, step and transcript types, plus the line-delimited codec.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compress::Observation;
use crate::final_output::Confidence;
use crate::resolve::{PredictionStatus, ResolutionTrace};

pub const TRANSCRIPT_SCHEMA: &str = "bictrace.transcript/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepKind {
    ToolCall {
        #[serde(default)]
        call_id: String,
        tool: String,
        #[serde(default)]
        arguments: Value,
    },
    Final {
        text: String,
    },
    Malformed {
        raw: String,
    },
}

/// One backend response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStep {
    #[serde(flatten)]
    pub kind: StepKind,
    /// Free text the model sent alongside a tool call.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub thought: String,
    #[serde(default)]
    pub usage: Usage,
}

impl ModelStep {
    pub fn tool(tool: &str, arguments: Value) -> Self {
        ModelStep {
            kind: StepKind::ToolCall {
                call_id: String::new(),
                tool: tool.to_string(),
                arguments,
            },
            thought: String::new(),
            usage: Usage::default(),
        }
    }

    pub fn final_answer(text: &str) -> Self {
        ModelStep {
            kind: StepKind::Final { text: text.to_string() },
            thought: String::new(),
            usage: Usage::default(),
        }
    }

    pub fn malformed(raw: &str) -> Self {
        ModelStep {
            kind: StepKind::Malformed { raw: raw.to_string() },
            thought: String::new(),
            usage: Usage::default(),
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = Usage {
            prompt_tokens,
            completion_tokens,
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub id: String,
    pub tool: String,
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Message {
    System {
        content: String,
    },
    User {
        content: String,
    },
    Assistant {
        content: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool_call: Option<CallRecord>,
    },
    Tool {
        call_id: String,
        name: String,
        content: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw_hash_text: String,
    pub confidence: Confidence,
    pub reasoning: String,
    pub status: PredictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionTrace>,
    /// Set when the case ended because of an infrastructure failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Prediction {
    pub fn none() -> Self {
        Prediction {
            raw_hash_text: String::new(),
            confidence: Confidence::Unstated,
            reasoning: String::new(),
            status: PredictionStatus::NoPrediction,
            resolution: None,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: u32,
    pub step: ModelStep,
    /// Arguments after validation and search-bound enforcement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_args: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    /// True for the single answer-only turn after the turn limit.
    #[serde(default)]
    pub forced: bool,
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub case_id: String,
    pub fix_commit: String,
    pub max_turns: u32,
    pub turns: Vec<TurnRecord>,
    /// Every backend round trip, including malformed and forced turns.
    pub total_turns: u32,
    /// Turns whose tool call was executed.
    pub tool_turns: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub wall_time_ms: u64,
    pub prediction: Prediction,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        schema: String,
        case_id: String,
        fix_commit: String,
        max_turns: u32,
    },
    Turn(TurnRecord),
    Summary {
        total_turns: u32,
        tool_turns: u32,
        prompt_tokens: u64,
        completion_tokens: u64,
        total_tokens: u64,
        wall_time_ms: u64,
        prediction: Prediction,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript schema mismatch at line {line}: {reason}")]
    SchemaMismatch { line: usize, reason: String },
}

fn mismatch(line: usize, reason: impl ToString) -> TranscriptError {
    TranscriptError::SchemaMismatch {
        line,
        reason: reason.to_string(),
    }
}

impl Transcript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("transcript records serialize"));
            out.push('\n');
        };
        push(&Record::Header {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            case_id: self.case_id.clone(),
            fix_commit: self.fix_commit.clone(),
            max_turns: self.max_turns,
        });
        for t in &self.turns {
            push(&Record::Turn(t.clone()));
        }
        push(&Record::Summary {
            total_turns: self.total_turns,
            tool_turns: self.tool_turns,
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
            total_tokens: self.total_tokens,
            wall_time_ms: self.wall_time_ms,
            prediction: self.prediction.clone(),
        });
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut t: Option<Transcript> = None;
        let mut finished = false;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let n = i + 1;
            if finished {
                return Err(mismatch(n, "record after summary"));
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| mismatch(n, e))?;
            match (rec, t.as_mut()) {
                (
                    Record::Header {
                        schema,
                        case_id,
                        fix_commit,
                        max_turns,
                    },
                    None,
                ) => {
                    if schema != TRANSCRIPT_SCHEMA {
                        return Err(mismatch(n, alloc::format!("unsupported schema {schema:?}")));
                    }
                    t = Some(Transcript {
                        case_id,
                        fix_commit,
                        max_turns,
                        turns: Vec::new(),
                        total_turns: 0,
                        tool_turns: 0,
                        prompt_tokens: 0,
                        completion_tokens: 0,
                        total_tokens: 0,
                        wall_time_ms: 0,
                        prediction: Prediction::none(),
                    });
                }
                (Record::Turn(turn), Some(tr)) => tr.turns.push(turn),
                (
                    Record::Summary {
                        total_turns,
                        tool_turns,
                        prompt_tokens,
                        completion_tokens,
                        total_tokens,
                        wall_time_ms,
                        prediction,
                    },
                    Some(tr),
                ) => {
                    tr.total_turns = total_turns;
                    tr.tool_turns = tool_turns;
                    tr.prompt_tokens = prompt_tokens;
                    tr.completion_tokens = completion_tokens;
                    tr.total_tokens = total_tokens;
                    tr.wall_time_ms = wall_time_ms;
                    tr.prediction = prediction;
                    finished = true;
                }
                (_, None) => return Err(mismatch(n, "first record must be the header")),
                (Record::Header { .. }, Some(_)) => return Err(mismatch(n, "duplicate header")),
            }
        }
        match t {
            Some(tr) if finished => Ok(tr),
            Some(_) => Err(mismatch(text.lines().count(), "missing summary record (truncated file?)")),
            None => Err(mismatch(0, "empty transcript")),
        }
    }
}
