//! A backend that replays pre-written turns.
//!
//! Script files are JSON:
//!
//! ```json
//! {"version": 1,
//!  "turns": [
//!    [{"text": "Let me look."},
//!     {"tool_call": {"name": "debug", "arguments": {"command": "p len"}}}],
//!    [{"text": "The loop runs 150 times.\n\n## Recommendation\n..."}]]}
//! ```
//!
//! Each call to `complete` plays the next turn. `arguments` may also be a
//! string, which is decoded like a provider payload. Tool calls get the
//! ids `call_<turn>_<n>`, both counted from 1.

use std::path::Path;
use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use super::{
    check_cancel, tool_event, ChatBackend, ChatMessage, CompletionEvent, LlmError, ToolSpec,
};

pub const SCRIPT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptItem {
    Text(String),
    ToolCall {
        name: String,
        arguments: serde_json::Value,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    version: u32,
    turns: Vec<Vec<ScriptItem>>,
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    turns: Vec<Vec<ScriptItem>>,
    next: usize,
}

impl ScriptedBackend {
    pub fn new(turns: Vec<Vec<ScriptItem>>) -> Self {
        ScriptedBackend { turns, next: 0 }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| LlmError::ScriptParse(e.to_string()))?;
        if file.version != SCRIPT_VERSION {
            return Err(LlmError::ScriptParse(format!(
                "unsupported script version {}",
                file.version
            )));
        }
        for (t, turn) in file.turns.iter().enumerate() {
            for item in turn {
                if let ScriptItem::ToolCall { arguments, .. } = item {
                    if !(arguments.is_object() || arguments.is_string()) {
                        return Err(LlmError::ScriptParse(format!(
                            "turn {}: arguments must be an object or a string",
                            t + 1
                        )));
                    }
                }
            }
        }
        Ok(Self::new(file.turns))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::ScriptParse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Turns played so far.
    pub fn turns_played(&self) -> usize {
        self.next
    }

    /// The events of turn `index` (0-based); a pure function of the script.
    pub fn events_for(&self, index: usize, tools: &[ToolSpec]) -> Option<Vec<CompletionEvent>> {
        let turn = self.turns.get(index)?;
        let mut events = Vec::new();
        let mut calls = 0;
        for item in turn {
            match item {
                ScriptItem::Text(t) => events.push(CompletionEvent::TextDelta(t.clone())),
                ScriptItem::ToolCall { name, arguments } => {
                    calls += 1;
                    let payload = match arguments {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    let id = format!("call_{}_{calls}", index + 1);
                    events.push(tool_event(id, name.clone(), &payload, tools));
                }
            }
        }
        let reason = if calls > 0 { "tool_calls" } else { "stop" };
        events.push(CompletionEvent::Done(reason.into()));
        Some(events)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &mut self,
        _messages: &[ChatMessage],
        tools: &[ToolSpec],
        cancel: &AtomicBool,
        on_event: &mut dyn FnMut(CompletionEvent),
    ) -> Result<(), LlmError> {
        check_cancel(cancel)?;
        let events = self
            .events_for(self.next, tools)
            .ok_or(LlmError::ScriptExhausted(self.turns.len()))?;
        self.next += 1;
        for e in events {
            on_event(e);
        }
        Ok(())
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"backend": "scripted", "turns": self.turns.len()})
    }
}
