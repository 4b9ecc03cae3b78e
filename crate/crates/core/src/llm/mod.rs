//! Chat-completion client with tool calls: message types, a conversation
//! validator, a scripted backend for tests and a streaming HTTP backend.

mod remote;
mod scripted;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::{parse_sse_stream, RemoteBackend, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};
pub use scripted::{ScriptItem, ScriptedBackend, SCRIPT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// Set on tool messages: the call being answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Set on assistant messages that requested tools.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
}

impl ChatMessage {
    fn plain(role: Role, content: String) -> Self {
        ChatMessage {
            role,
            content,
            tool_call_id: None,
            tool_calls: Vec::new(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content.into())
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content.into())
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCallRequest>) -> Self {
        ChatMessage {
            tool_calls,
            ..Self::plain(Role::Assistant, content.into())
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, content.into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    /// All parameters are required strings.
    pub parameters: Vec<ToolParam>,
}

impl ToolSpec {
    pub fn new(name: &str, description: &str, params: &[(&str, &str)]) -> Self {
        ToolSpec {
            name: name.into(),
            description: description.into(),
            parameters: params
                .iter()
                .map(|(n, d)| ToolParam {
                    name: (*n).into(),
                    description: (*d).into(),
                })
                .collect(),
        }
    }

    /// JSON schema of the parameters, as sent on the wire.
    pub fn schema(&self) -> serde_json::Value {
        let props: serde_json::Map<String, serde_json::Value> = self
            .parameters
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    serde_json::json!({"type": "string", "description": p.description}),
                )
            })
            .collect();
        let required: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        serde_json::json!({"type": "object", "properties": props, "required": required})
    }

    /// Checks decoded arguments against the parameter list.
    pub fn validate(&self, args: &BTreeMap<String, String>) -> Result<(), String> {
        for p in &self.parameters {
            if !args.contains_key(&p.name) {
                return Err(format!("missing argument `{}`", p.name));
            }
        }
        for k in args.keys() {
            if !self.parameters.iter().any(|p| &p.name == k) {
                return Err(format!("unknown argument `{k}`"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub id: String,
    pub name: String,
    pub arguments: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionEvent {
    TextDelta(String),
    ToolCall(ToolCallRequest),
    /// A tool call whose arguments could not be decoded. The dialog can
    /// continue by answering it with the error.
    MalformedToolCall {
        id: String,
        name: String,
        error: String,
    },
    Done(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited{}", .retry_after.map(|d| format!(" (retry after {}s)", d.as_secs())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed tool arguments: {0}")]
    MalformedToolArgs(String),
    #[error("script error: {0}")]
    ScriptParse(String),
    #[error("script exhausted after {0} turn(s)")]
    ScriptExhausted(usize),
    #[error("interrupted")]
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub model: String,
    pub base_url: String,
    pub api_key_env: String,
    pub temperature: Option<f64>,
    pub timeout: Duration,
    /// Retries after rate limiting or server errors, per request.
    pub max_retries: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model: "gpt-4o".into(),
            base_url: DEFAULT_BASE_URL.into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            temperature: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
        }
    }
}

/// A source of completions. Events for one call are delivered in order
/// through `on_event`, ending with `Done` on success.
pub trait ChatBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        cancel: &AtomicBool,
        on_event: &mut dyn FnMut(CompletionEvent),
    ) -> Result<(), LlmError>;

    /// Short description for transcript headers.
    fn describe(&self) -> serde_json::Value;
}

pub(crate) fn check_cancel(cancel: &AtomicBool) -> Result<(), LlmError> {
    if cancel.load(Ordering::SeqCst) {
        Err(LlmError::Interrupted)
    } else {
        Ok(())
    }
}

/// Decodes a provider argument payload (a JSON object of strings).
pub fn parse_tool_arguments(payload: &str) -> Result<BTreeMap<String, String>, LlmError> {
    let payload = if payload.trim().is_empty() {
        "{}"
    } else {
        payload
    };
    let value: serde_json::Value = serde_json::from_str(payload)
        .map_err(|e| LlmError::MalformedToolArgs(format!("{e}: {payload}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| LlmError::MalformedToolArgs(format!("not an object: {payload}")))?;
    obj.iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(_) | serde_json::Value::Bool(_) => v.to_string(),
                _ => {
                    return Err(LlmError::MalformedToolArgs(format!(
                        "argument `{k}` is not a string"
                    )))
                }
            };
            Ok((k.clone(), s))
        })
        .collect()
}

/// Turns a raw tool call into an event, validating name and arguments.
pub(crate) fn tool_event(
    id: String,
    name: String,
    payload: &str,
    tools: &[ToolSpec],
) -> CompletionEvent {
    let Some(spec) = tools.iter().find(|t| t.name == name) else {
        return CompletionEvent::MalformedToolCall {
            id,
            error: format!("unknown tool `{name}`"),
            name,
        };
    };
    match parse_tool_arguments(payload).and_then(|args| {
        spec.validate(&args)
            .map(|_| args)
            .map_err(LlmError::MalformedToolArgs)
    }) {
        Ok(arguments) => CompletionEvent::ToolCall(ToolCallRequest {
            id,
            name,
            arguments,
        }),
        Err(e) => CompletionEvent::MalformedToolCall {
            id,
            name,
            error: e.to_string(),
        },
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConversationError {
    #[error("message {index}: tool call `{id}` answered {count} time(s)")]
    Unanswered {
        index: usize,
        id: String,
        count: usize,
    },
    #[error("message {index}: tool message for unknown call `{id}`")]
    UnknownCall { index: usize, id: String },
    #[error("message {index}: tool message without a call id")]
    MissingId { index: usize },
    #[error("message {index}: unregistered tool `{name}`")]
    UnknownTool { index: usize, name: String },
    #[error("duplicate tool name `{0}`")]
    DuplicateTool(String),
}

/// Checks that every tool call is answered by exactly one tool message
/// before the next assistant message, and that tool messages only answer
/// calls that were made.
pub fn validate_conversation(
    messages: &[ChatMessage],
    tools: &[ToolSpec],
) -> Result<(), ConversationError> {
    let mut names = HashSet::new();
    for t in tools {
        if !names.insert(t.name.as_str()) {
            return Err(ConversationError::DuplicateTool(t.name.clone()));
        }
    }
    // Calls of the latest assistant message and how often each was answered.
    let mut open: HashMap<String, (usize, usize)> = HashMap::new();
    let close = |open: &mut HashMap<String, (usize, usize)>| -> Result<(), ConversationError> {
        let mut pending: Vec<_> = open.drain().collect();
        pending.sort_by_key(|(_, (index, _))| *index);
        for (id, (index, count)) in pending {
            if count != 1 {
                return Err(ConversationError::Unanswered { index, id, count });
            }
        }
        Ok(())
    };
    for (i, m) in messages.iter().enumerate() {
        match m.role {
            Role::Assistant => {
                close(&mut open)?;
                for call in &m.tool_calls {
                    if !names.contains(call.name.as_str()) {
                        return Err(ConversationError::UnknownTool {
                            index: i,
                            name: call.name.clone(),
                        });
                    }
                    open.insert(call.id.clone(), (i, 0));
                }
            }
            Role::Tool => {
                let id = m
                    .tool_call_id
                    .as_ref()
                    .ok_or(ConversationError::MissingId { index: i })?;
                match open.get_mut(id) {
                    Some((_, count)) => *count += 1,
                    None => {
                        return Err(ConversationError::UnknownCall {
                            index: i,
                            id: id.clone(),
                        })
                    }
                }
            }
            Role::System | Role::User => {}
        }
    }
    close(&mut open)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tools() -> Vec<ToolSpec> {
        vec![ToolSpec::new("debug", "run", &[("command", "cmd")])]
    }

    fn call(id: &str) -> ToolCallRequest {
        ToolCallRequest {
            id: id.into(),
            name: "debug".into(),
            arguments: [("command".to_string(), "p x".to_string())].into(),
        }
    }

    #[test]
    fn validator_accepts_answered_calls() {
        let msgs = vec![
            ChatMessage::user("q"),
            ChatMessage::assistant("", vec![call("a"), call("b")]),
            ChatMessage::tool("a", "1"),
            ChatMessage::tool("b", "2"),
            ChatMessage::assistant("done", vec![]),
        ];
        assert_eq!(validate_conversation(&msgs, &tools()), Ok(()));
    }

    #[test]
    fn validator_rejects_missing_and_extra_answers() {
        let missing = vec![
            ChatMessage::assistant("", vec![call("a")]),
            ChatMessage::assistant("x", vec![]),
        ];
        assert!(matches!(
            validate_conversation(&missing, &tools()),
            Err(ConversationError::Unanswered { count: 0, .. })
        ));
        let twice = vec![
            ChatMessage::assistant("", vec![call("a")]),
            ChatMessage::tool("a", "1"),
            ChatMessage::tool("a", "1"),
        ];
        assert!(matches!(
            validate_conversation(&twice, &tools()),
            Err(ConversationError::Unanswered { count: 2, .. })
        ));
        let stray = vec![ChatMessage::tool("zz", "1")];
        assert!(matches!(
            validate_conversation(&stray, &tools()),
            Err(ConversationError::UnknownCall { .. })
        ));
    }

    #[test]
    fn tool_argument_decoding() {
        let t = tools();
        match tool_event("1".into(), "debug".into(), r#"{"command":"p x"}"#, &t) {
            CompletionEvent::ToolCall(c) => assert_eq!(c.arguments["command"], "p x"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            tool_event("1".into(), "debug".into(), r#"{"command":"#, &t),
            CompletionEvent::MalformedToolCall { .. }
        ));
        assert!(matches!(
            tool_event("1".into(), "debug".into(), r#"{}"#, &t),
            CompletionEvent::MalformedToolCall { .. }
        ));
        assert!(matches!(
            tool_event("1".into(), "nope".into(), r#"{}"#, &t),
            CompletionEvent::MalformedToolCall { .. }
        ));
    }
}
