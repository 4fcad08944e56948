//! Resolution of a declared hash against the repository with a prefix ladder.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::commit::CommitId;
use crate::time::Timestamp;

pub const DEFAULT_LADDER: [usize; 4] = [12, 10, 8, 7];

/// Inputs shorter than this are discarded without touching the repository.
pub const MIN_PREFIX: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "id", rename_all = "snake_case")]
pub enum RefLookup {
    Found(CommitId),
    NotFound,
    Ambiguous,
}

/// Repository access needed to resolve a prediction. Errors are
/// infrastructure failures, not "no such commit".
pub trait CommitResolver {
    fn lookup(&mut self, text: &str) -> Result<RefLookup, String>;
    fn commit_time(&mut self, id: &CommitId) -> Result<Timestamp, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "id", rename_all = "snake_case")]
pub enum PredictionStatus {
    Resolved(CommitId),
    Discarded,
    NoPrediction,
}

impl PredictionStatus {
    pub fn resolved(&self) -> Option<&CommitId> {
        match self {
            PredictionStatus::Resolved(id) => Some(id),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PredictionStatus::Resolved(_) => "resolved",
            PredictionStatus::Discarded => "discarded",
            PredictionStatus::NoPrediction => "no_prediction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub length: usize,
    pub text: String,
    pub outcome: RefLookup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionTrace {
    pub input_text: String,
    pub sanitized: String,
    pub attempts: Vec<Attempt>,
    pub result: PredictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Lengths to try for `sanitized`: the whole string, then each ladder rung
/// strictly shorter than it.
pub fn ladder_lengths(sanitized_len: usize, ladder: &[usize]) -> Vec<usize> {
    if sanitized_len < MIN_PREFIX {
        return Vec::new();
    }
    let mut out = alloc::vec![sanitized_len];
    out.extend(ladder.iter().copied().filter(|&l| l < sanitized_len && l >= MIN_PREFIX));
    out
}

/// Resolve `sanitized` (lowercase hex) to a commit. A commit later than
/// `fix_date` is reported as discarded.
pub fn resolve_prediction<R: CommitResolver + ?Sized>(
    resolver: &mut R,
    input_text: &str,
    sanitized: &str,
    ladder: &[usize],
    fix_date: Option<Timestamp>,
) -> Result<ResolutionTrace, String> {
    let mut trace = ResolutionTrace {
        input_text: input_text.to_string(),
        sanitized: sanitized.to_string(),
        attempts: Vec::new(),
        result: PredictionStatus::Discarded,
        note: None,
    };
    if sanitized.len() < MIN_PREFIX {
        trace.note = Some(alloc::format!("shorter than {MIN_PREFIX} hex characters"));
        return Ok(trace);
    }
    for len in ladder_lengths(sanitized.len(), ladder) {
        let text = &sanitized[..len];
        let outcome = resolver.lookup(text)?;
        let found = match &outcome {
            RefLookup::Found(id) if id.as_str().starts_with(text) => Some(id.clone()),
            _ => None,
        };
        trace.attempts.push(Attempt {
            length: len,
            text: text.to_string(),
            outcome,
        });
        if let Some(id) = found {
            let when = resolver.commit_time(&id)?;
            match fix_date {
                Some(fix) if when > fix => {
                    trace.note = Some(alloc::format!("{id} is later than the fixing commit"));
                }
                _ => trace.result = PredictionStatus::Resolved(id),
            }
            return Ok(trace);
        }
    }
    trace.note = Some("no prefix resolved to a unique commit".to_string());
    Ok(trace)
}
