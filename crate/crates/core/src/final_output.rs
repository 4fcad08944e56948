//! Parsing of the model's final answer.
//!
//! Expected shape (surrounding prose is tolerated):
//!
//! ```text
//! ```
//! BIC: <commit hash>
//! Confidence: <high|medium|low>
//! Reasoning: <text>
//! ```
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Medium,
    Low,
    Unstated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalFields {
    pub raw_hash_text: String,
    pub confidence: Confidence,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("final answer contains no commit hash")]
pub struct NoHashFound;

/// Strip markdown decoration so `**BIC**:` and `- BIC:` read as labels.
fn label_value<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let t = line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '`' | '-' | '#' | '>'));
    if t.len() < label.len() || !t[..label.len()].eq_ignore_ascii_case(label) {
        return None;
    }
    let rest = t[label.len()..].trim_start_matches(['*', '_', '`']);
    let rest = rest.trim_start();
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim_start_matches(['*', '_']).trim())
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty())
}

/// Longest token made only of hex digits, lowercased; ties go to the first.
pub fn sanitize_hash(raw: &str) -> String {
    let mut best = "";
    for tok in tokens(raw) {
        if tok.bytes().all(|b| b.is_ascii_hexdigit()) && tok.len() > best.len() {
            best = tok;
        }
    }
    best.to_ascii_lowercase()
}

fn parse_confidence(value: &str) -> Confidence {
    match tokens(value).next().map(|t| t.to_ascii_lowercase()).as_deref() {
        Some("high") => Confidence::High,
        Some("medium") | Some("moderate") => Confidence::Medium,
        Some("low") => Confidence::Low,
        _ => Confidence::Unstated,
    }
}

pub fn parse_final_output(text: &str) -> Result<FinalFields, NoHashFound> {
    let lines: Vec<&str> = text.lines().collect();
    let mut bic: Option<&str> = None;
    let mut confidence = Confidence::Unstated;
    let mut reasoning_at: Option<usize> = None;
    for (i, line) in lines.iter().enumerate() {
        if bic.is_none() {
            if let Some(v) = label_value(line, "BIC") {
                bic = Some(v);
                continue;
            }
        }
        if confidence == Confidence::Unstated {
            if let Some(v) = label_value(line, "Confidence") {
                confidence = parse_confidence(v);
                continue;
            }
        }
        if reasoning_at.is_none() && label_value(line, "Reasoning").is_some() {
            reasoning_at = Some(i);
        }
    }

    let raw_hash_text = match bic {
        Some(v) => {
            if sanitize_hash(v).is_empty() {
                return Err(NoHashFound);
            }
            v.to_string()
        }
        None => tokens(text)
            .find(|t| t.len() >= 7 && t.bytes().all(|b| b.is_ascii_hexdigit()) && t.bytes().any(|b| b.is_ascii_digit()))
            .ok_or(NoHashFound)?
            .to_string(),
    };

    let reasoning = match reasoning_at {
        Some(i) => {
            let mut r = String::from(label_value(lines[i], "Reasoning").unwrap_or(""));
            for line in &lines[i + 1..] {
                if line.trim_start().starts_with("```") {
                    break;
                }
                r.push('\n');
                r.push_str(line);
            }
            r.trim().to_string()
        }
        None => {
            let rest: Vec<&str> = lines
                .iter()
                .copied()
                .filter(|l| label_value(l, "BIC").is_none() && label_value(l, "Confidence").is_none())
                .filter(|l| !l.trim_start().starts_with("```"))
                .collect();
            rest.join("\n").trim().to_string()
        }
    };

    Ok(FinalFields {
        raw_hash_text,
        confidence,
        reasoning,
    })
}
