//! The investigation loop and the in-memory model backends.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::compress::Observation;
use crate::final_output::{parse_final_output, sanitize_hash};
use crate::prompt::InitialContext;
use crate::resolve::{resolve_prediction, CommitResolver, PredictionStatus, DEFAULT_LADDER};
use crate::time::Timestamp;
use crate::tools::{enforce_search_bound, ToolArgs, ToolName, ToolSchema};
use crate::transcript::{CallRecord, Message, ModelStep, Prediction, StepKind, Transcript, TurnRecord};

pub const DEFAULT_MAX_TURNS: u32 = 15;

/// Consecutive malformed steps (one plus two retries) before giving up.
pub const DEFAULT_MAX_MALFORMED: u32 = 3;

pub const FORCED_ANSWER_PROMPT: &str = "The turn limit has been reached and no more tool calls are possible. \
Reply now with your final answer block (BIC, Confidence, Reasoning) based on what you have found.";

pub const MALFORMED_PROMPT: &str = "Your last reply was not understood. Either call exactly one of the provided \
tools with valid JSON arguments, or give the final answer block (BIC, Confidence, Reasoning).";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network, authentication or endpoint failure.
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
    /// Replay diverged from the recording.
    #[error("replay desync at turn {turn}: {reason}")]
    Desync { turn: u32, reason: String },
}

pub trait ModelBackend {
    fn send(&mut self, conversation: &[Message], tools: &[ToolSchema]) -> Result<ModelStep, BackendError>;
}

/// Executes one validated call: bound enforcement, cache, git, compression.
pub trait ToolRunner {
    fn run(&mut self, args: &ToolArgs) -> Observation;
}

pub trait Clock {
    fn now_ms(&mut self) -> u64;
}

/// Deterministic clock: every reading advances by one millisecond.
#[derive(Debug, Default, Clone)]
pub struct LogicalClock(u64);

impl Clock for LogicalClock {
    fn now_ms(&mut self) -> u64 {
        self.0 += 1;
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_turns: u32,
    /// Send one answer-only turn after the limit.
    pub forced_answer: bool,
    pub max_malformed: u32,
    pub ladder: Vec<usize>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_turns: DEFAULT_MAX_TURNS,
            forced_answer: true,
            max_malformed: DEFAULT_MAX_MALFORMED,
            ladder: DEFAULT_LADDER.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Desync(BackendError),
    #[error("repository error while resolving the prediction: {0}")]
    Resolver(String),
}

pub struct CaseRef<'a> {
    pub case_id: &'a str,
    pub fix_commit: &'a str,
    pub fix_date: Timestamp,
}

pub fn invalid_call_text(tool: ToolName, err: &dyn core::fmt::Display) -> String {
    format!("Error: invalid arguments for {tool}: {err}. Check the tool schema and try again.")
}

pub fn run_investigation<B, T, R, C>(
    case: &CaseRef<'_>,
    ctx: &InitialContext,
    backend: &mut B,
    tools: &mut T,
    resolver: &mut R,
    clock: &mut C,
    cfg: &LoopConfig,
) -> Result<(Prediction, Transcript), AgentError>
where
    B: ModelBackend + ?Sized,
    T: ToolRunner + ?Sized,
    R: CommitResolver + ?Sized,
    C: Clock + ?Sized,
{
    let start = clock.now_ms();
    let mut conversation = alloc::vec![
        Message::System {
            content: ctx.system_prompt.clone(),
        },
        Message::User {
            content: ctx.user_prompt.clone(),
        },
    ];
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut tool_turns = 0u32;
    let mut malformed_streak = 0u32;
    let mut final_text: Option<String> = None;
    let mut failure: Option<String> = None;
    let mut gave_up = false;

    let mut index = 0u32;
    while index < cfg.max_turns {
        index += 1;
        let started = clock.now_ms();
        let step = match backend.send(&conversation, &ctx.tool_specs) {
            Ok(s) => s,
            Err(e @ BackendError::Desync { .. }) => return Err(AgentError::Desync(e)),
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let mut record = TurnRecord {
            index,
            step: step.clone(),
            effective_args: None,
            observation: None,
            forced: false,
            started_ms: started,
            finished_ms: 0,
        };
        match &step.kind {
            StepKind::ToolCall { call_id, tool, arguments } => {
                let parsed_tool: Option<ToolName> = tool.parse().ok();
                match parsed_tool {
                    None => {
                        malformed_streak += 1;
                        conversation.push(Message::Assistant {
                            content: step.thought.clone(),
                            tool_call: None,
                        });
                        conversation.push(Message::User {
                            content: format!("Unknown tool {tool:?}. {MALFORMED_PROMPT}"),
                        });
                    }
                    Some(name) => {
                        malformed_streak = 0;
                        let call_id = if call_id.is_empty() { format!("call_{index}") } else { call_id.clone() };
                        let observation = match ToolArgs::from_json(name, arguments) {
                            Ok(args) => {
                                let args = enforce_search_bound(args, case.fix_date);
                                record.effective_args = Some(args.to_json());
                                tool_turns += 1;
                                tools.run(&args)
                            }
                            Err(e) => Observation {
                                text: invalid_call_text(name, &e),
                                truncated: false,
                                cache_hit: false,
                                source_tool: name,
                            },
                        };
                        conversation.push(Message::Assistant {
                            content: step.thought.clone(),
                            tool_call: Some(CallRecord {
                                id: call_id.clone(),
                                tool: name.as_str().to_string(),
                                arguments: arguments.clone(),
                            }),
                        });
                        conversation.push(Message::Tool {
                            call_id,
                            name: name.as_str().to_string(),
                            content: observation.text.clone(),
                        });
                        record.observation = Some(observation);
                    }
                }
            }
            StepKind::Final { text } => {
                final_text = Some(text.clone());
            }
            StepKind::Malformed { raw } => {
                malformed_streak += 1;
                conversation.push(Message::Assistant {
                    content: raw.clone(),
                    tool_call: None,
                });
                conversation.push(Message::User {
                    content: MALFORMED_PROMPT.to_string(),
                });
            }
        }
        record.finished_ms = clock.now_ms();
        turns.push(record);
        if final_text.is_some() {
            break;
        }
        if malformed_streak >= cfg.max_malformed {
            gave_up = true;
            break;
        }
    }

    if final_text.is_none() && failure.is_none() && !gave_up && cfg.forced_answer {
        index += 1;
        conversation.push(Message::User {
            content: FORCED_ANSWER_PROMPT.to_string(),
        });
        let started = clock.now_ms();
        match backend.send(&conversation, &[]) {
            Ok(mut step) => {
                match &step.kind {
                    StepKind::Final { text } => final_text = Some(text.clone()),
                    StepKind::ToolCall { tool, arguments, .. } => {
                        // Not executed: no tools were offered.
                        let raw = format!("{tool} {arguments}");
                        step.kind = StepKind::Malformed { raw };
                    }
                    StepKind::Malformed { .. } => {}
                }
                turns.push(TurnRecord {
                    index,
                    step,
                    effective_args: None,
                    observation: None,
                    forced: true,
                    started_ms: started,
                    finished_ms: clock.now_ms(),
                });
            }
            Err(e @ BackendError::Desync { .. }) => return Err(AgentError::Desync(e)),
            Err(e) => failure = Some(e.to_string()),
        }
    }

    let mut prediction = Prediction::none();
    prediction.failure = failure;
    if let Some(text) = final_text {
        if let Ok(fields) = parse_final_output(&text) {
            let sanitized = sanitize_hash(&fields.raw_hash_text);
            let trace = resolve_prediction(resolver, &fields.raw_hash_text, &sanitized, &cfg.ladder, Some(case.fix_date))
                .map_err(AgentError::Resolver)?;
            prediction.status = trace.result.clone();
            prediction.raw_hash_text = fields.raw_hash_text;
            prediction.confidence = fields.confidence;
            prediction.reasoning = fields.reasoning;
            prediction.resolution = Some(trace);
        } else {
            prediction.reasoning = text;
            prediction.status = PredictionStatus::NoPrediction;
        }
    }

    let prompt_tokens = turns.iter().map(|t| t.step.usage.prompt_tokens).sum();
    let completion_tokens = turns.iter().map(|t| t.step.usage.completion_tokens).sum();
    let end = clock.now_ms();
    let transcript = Transcript {
        case_id: case.case_id.to_string(),
        fix_commit: case.fix_commit.to_string(),
        max_turns: cfg.max_turns,
        total_turns: turns.len() as u32,
        tool_turns,
        prompt_tokens,
        completion_tokens,
        total_tokens: prompt_tokens + completion_tokens,
        wall_time_ms: end.saturating_sub(start),
        turns,
        prediction: prediction.clone(),
    };
    Ok((prediction, transcript))
}

/// Plays a fixed list of steps; optionally repeats the last one forever.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    steps: VecDeque<ModelStep>,
    repeat_last: bool,
    last: Option<ModelStep>,
}

impl ScriptedBackend {
    pub fn new(steps: Vec<ModelStep>) -> Self {
        ScriptedBackend {
            steps: steps.into(),
            repeat_last: false,
            last: None,
        }
    }

    /// Emits `step` on every call.
    pub fn repeating(step: ModelStep) -> Self {
        ScriptedBackend {
            steps: VecDeque::new(),
            repeat_last: true,
            last: Some(step),
        }
    }

    /// Parse one JSON step per line; blank lines and `#` comments are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut steps = Vec::new();
        for line in text.lines() {
            let l = line.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            steps.push(serde_json::from_str(l)?);
        }
        Ok(Self::new(steps))
    }
}

impl ModelBackend for ScriptedBackend {
    fn send(&mut self, _conversation: &[Message], _tools: &[ToolSchema]) -> Result<ModelStep, BackendError> {
        if let Some(step) = self.steps.pop_front() {
            self.last = Some(step.clone());
            return Ok(step);
        }
        match (&self.last, self.repeat_last) {
            (Some(step), true) => Ok(step.clone()),
            _ => Err(BackendError::Unavailable("scripted backend has no more steps".into())),
        }
    }
}

/// Replays the model side of a recorded transcript and checks that every
/// observation the loop produces matches the recorded one.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    turns: Vec<TurnRecord>,
    next: usize,
}

impl ReplayBackend {
    pub fn new(transcript: &Transcript) -> Self {
        ReplayBackend {
            turns: transcript.turns.clone(),
            next: 0,
        }
    }
}

fn last_tool_output(conversation: &[Message]) -> Option<&str> {
    match conversation.last() {
        Some(Message::Tool { content, .. }) => Some(content),
        _ => None,
    }
}

impl ModelBackend for ReplayBackend {
    fn send(&mut self, conversation: &[Message], _tools: &[ToolSchema]) -> Result<ModelStep, BackendError> {
        if self.next > 0 {
            let prev = &self.turns[self.next - 1];
            if let Some(expected) = &prev.observation {
                if last_tool_output(conversation) != Some(expected.text.as_str()) {
                    return Err(BackendError::Desync {
                        turn: prev.index,
                        reason: "observation differs from the recording".into(),
                    });
                }
            }
        }
        let Some(turn) = self.turns.get(self.next) else {
            return Err(BackendError::Desync {
                turn: self.next as u32 + 1,
                reason: "recording has no more turns".into(),
            });
        };
        self.next += 1;
        Ok(turn.step.clone())
    }
}
