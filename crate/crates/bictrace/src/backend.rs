//! Chat-completions HTTP backend.

use std::time::Duration;

use bictrace_core::agent::{BackendError, ModelBackend};
use bictrace_core::transcript::{Message, ModelStep, StepKind, Usage};
use bictrace_core::ToolSchema;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone)]
pub struct LiveSettings {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub request_timeout: Duration,
    /// Extra request fields passed through verbatim (temperature etc.).
    pub extra: Map<String, Value>,
}

pub struct LiveBackend {
    settings: LiveSettings,
    agent: ureq::Agent,
}

impl LiveBackend {
    pub fn new(settings: LiveSettings) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(settings.request_timeout))
            .http_status_as_error(false)
            .build();
        LiveBackend {
            agent: ureq::Agent::new_with_config(config),
            settings,
        }
    }
}

pub fn wire_messages(conversation: &[Message]) -> Vec<Value> {
    conversation
        .iter()
        .map(|m| match m {
            Message::System { content } => json!({"role": "system", "content": content}),
            Message::User { content } => json!({"role": "user", "content": content}),
            Message::Assistant { content, tool_call: None } => json!({"role": "assistant", "content": content}),
            Message::Assistant {
                content,
                tool_call: Some(call),
            } => json!({
                "role": "assistant",
                "content": if content.is_empty() { Value::Null } else { Value::String(content.clone()) },
                "tool_calls": [{
                    "id": call.id,
                    "type": "function",
                    "function": {"name": call.tool, "arguments": call.arguments.to_string()},
                }],
            }),
            Message::Tool { call_id, content, .. } => {
                json!({"role": "tool", "tool_call_id": call_id, "content": content})
            }
        })
        .collect()
}

pub fn request_body(settings: &LiveSettings, conversation: &[Message], tools: &[ToolSchema]) -> Value {
    let mut body = Map::new();
    body.insert("model".into(), Value::String(settings.model.clone()));
    body.insert("messages".into(), Value::Array(wire_messages(conversation)));
    if !tools.is_empty() {
        body.insert("tools".into(), Value::Array(tools.iter().map(ToolSchema::to_wire).collect()));
        body.insert("tool_choice".into(), Value::String("auto".into()));
        body.insert("parallel_tool_calls".into(), Value::Bool(false));
    }
    for (k, v) in &settings.extra {
        body.insert(k.clone(), v.clone());
    }
    Value::Object(body)
}

/// Turn a chat-completions response into one step.
pub fn parse_response(resp: &Value) -> Result<ModelStep, BackendError> {
    let usage = Usage {
        prompt_tokens: resp["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: resp["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    let Some(message) = resp["choices"].get(0).map(|c| &c["message"]) else {
        return Err(BackendError::Unavailable(format!("response has no choices: {resp}")));
    };
    let content = message["content"].as_str().unwrap_or("").to_string();
    let calls = message["tool_calls"].as_array().cloned().unwrap_or_default();
    let kind = match calls.len() {
        0 if content.trim().is_empty() => StepKind::Malformed {
            raw: message.to_string(),
        },
        0 => StepKind::Final { text: content.clone() },
        1 => {
            let f = &calls[0]["function"];
            let args_text = f["arguments"].as_str().unwrap_or("{}");
            match (f["name"].as_str(), serde_json::from_str::<Value>(args_text)) {
                (Some(name), Ok(arguments)) => StepKind::ToolCall {
                    call_id: calls[0]["id"].as_str().unwrap_or("").to_string(),
                    tool: name.to_string(),
                    arguments,
                },
                _ => StepKind::Malformed {
                    raw: message.to_string(),
                },
            }
        }
        _ => StepKind::Malformed {
            raw: format!("{} parallel tool calls; only one call per turn is allowed", calls.len()),
        },
    };
    let thought = match kind {
        StepKind::ToolCall { .. } => content,
        _ => String::new(),
    };
    Ok(ModelStep { kind, thought, usage })
}

impl ModelBackend for LiveBackend {
    fn send(&mut self, conversation: &[Message], tools: &[ToolSchema]) -> Result<ModelStep, BackendError> {
        let body = request_body(&self.settings, conversation, tools);
        let mut resp = self
            .agent
            .post(&self.settings.endpoint)
            .header("Authorization", &format!("Bearer {}", self.settings.api_key))
            .header("Content-Type", "application/json")
            .send_json(&body)
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        if !(200..300).contains(&status) {
            let snippet: String = text.chars().take(500).collect();
            return Err(BackendError::Unavailable(format!("HTTP {status}: {snippet}")));
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Unavailable(format!("invalid JSON response: {e}")))?;
        parse_response(&value)
    }
}
