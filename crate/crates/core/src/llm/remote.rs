//! Streaming chat completions over HTTPS in the widely used
//! `/chat/completions` shape.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::sync::atomic::AtomicBool;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    check_cancel, tool_event, ChatBackend, ChatMessage, CompletionEvent, LlmError, ModelConfig,
    Role, ToolSpec,
};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

const MAX_RETRY_WAIT: Duration = Duration::from_secs(30);

pub struct RemoteBackend {
    config: ModelConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    /// First backoff step when the server gives no retry hint.
    pub retry_base: Duration,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("model", &self.config.model)
            .field("base_url", &self.config.base_url)
            .finish()
    }
}

impl RemoteBackend {
    /// Reads the key from the configured environment variable. Fails
    /// without touching the network when it is unset or empty.
    pub fn from_env(config: ModelConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env).unwrap_or_default();
        Self::with_key(config, key)
    }

    pub fn with_key(config: ModelConfig, api_key: String) -> Result<Self, LlmError> {
        if api_key.trim().is_empty() {
            return Err(LlmError::Auth(format!(
                "environment variable {} is not set",
                config.api_key_env
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(RemoteBackend {
            config,
            api_key,
            client,
            retry_base: Duration::from_millis(500),
        })
    }

    fn request_body(&self, messages: &[ChatMessage], tools: &[ToolSpec]) -> Value {
        let messages: Vec<Value> = messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "stream": true,
        });
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| {
                    json!({"type": "function", "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.schema(),
                    }})
                })
                .collect();
        }
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<reqwest::blocking::Response, LlmError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return Ok(resp);
        }
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.text().unwrap_or_default();
        Err(match status {
            401 | 403 => LlmError::Auth(format!("HTTP {status}: {}", error_message(&text))),
            429 => LlmError::RateLimited { retry_after },
            _ => LlmError::Http {
                status,
                body: error_message(&text),
            },
        })
    }
}

fn retryable(e: &LlmError) -> bool {
    match e {
        LlmError::RateLimited { .. } | LlmError::Transport(_) => true,
        LlmError::Http { status, .. } => *status >= 500,
        _ => false,
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| body.chars().take(500).collect())
}

fn wire_message(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({"role": role, "content": m.content});
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                let args: serde_json::Map<String, Value> = c
                    .arguments
                    .iter()
                    .map(|(k, v)| (k.clone(), json!(v)))
                    .collect();
                json!({"id": c.id, "type": "function", "function": {
                    "name": c.name,
                    "arguments": Value::Object(args).to_string(),
                }})
            })
            .collect();
    }
    v
}

impl ChatBackend for RemoteBackend {
    fn complete(
        &mut self,
        messages: &[ChatMessage],
        tools: &[ToolSpec],
        cancel: &AtomicBool,
        on_event: &mut dyn FnMut(CompletionEvent),
    ) -> Result<(), LlmError> {
        let body = self.request_body(messages, tools);
        let mut attempt = 0u32;
        let resp = loop {
            check_cancel(cancel)?;
            match self.send_once(&body) {
                Ok(r) => break r,
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let wait = match &e {
                        LlmError::RateLimited {
                            retry_after: Some(d),
                        } => *d,
                        _ => self.retry_base * 2u32.pow(attempt),
                    };
                    thread::sleep(wait.min(MAX_RETRY_WAIT));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        parse_sse_stream(BufReader::new(resp), tools, cancel, on_event)
    }

    fn describe(&self) -> Value {
        json!({
            "backend": "remote",
            "model": self.config.model,
            "base_url": self.config.base_url,
            "temperature": self.config.temperature,
        })
    }
}

#[derive(Default)]
struct PartialCall {
    id: String,
    name: String,
    arguments: String,
}

/// Reads a server-sent event stream of completion chunks. Text is
/// forwarded as it arrives; tool calls are assembled and emitted when the
/// stream finishes, followed by `Done`.
pub fn parse_sse_stream(
    reader: impl BufRead,
    tools: &[ToolSpec],
    cancel: &AtomicBool,
    on_event: &mut dyn FnMut(CompletionEvent),
) -> Result<(), LlmError> {
    let mut calls: BTreeMap<u64, PartialCall> = BTreeMap::new();
    let mut finish: Option<String> = None;
    let mut done = false;
    for line in reader.lines() {
        check_cancel(cancel)?;
        let line = line.map_err(|e| LlmError::Transport(e.to_string()))?;
        let Some(data) = line.strip_prefix("data:") else {
            continue;
        };
        let data = data.trim();
        if data == "[DONE]" {
            done = true;
            break;
        }
        let chunk: Value = serde_json::from_str(data)
            .map_err(|e| LlmError::Transport(format!("bad stream chunk: {e}")))?;
        if let Some(err) = chunk.get("error") {
            return Err(LlmError::Transport(
                err["message"]
                    .as_str()
                    .unwrap_or("stream error")
                    .to_string(),
            ));
        }
        let Some(choice) = chunk["choices"].get(0) else {
            continue;
        };
        let delta = &choice["delta"];
        if let Some(text) = delta["content"].as_str() {
            if !text.is_empty() {
                on_event(CompletionEvent::TextDelta(text.to_string()));
            }
        }
        if let Some(parts) = delta["tool_calls"].as_array() {
            for part in parts {
                let index = part["index"].as_u64().unwrap_or(0);
                let call = calls.entry(index).or_default();
                if let Some(id) = part["id"].as_str() {
                    call.id = id.to_string();
                }
                if let Some(name) = part["function"]["name"].as_str() {
                    call.name.push_str(name);
                }
                if let Some(args) = part["function"]["arguments"].as_str() {
                    call.arguments.push_str(args);
                }
            }
        }
        if let Some(reason) = choice["finish_reason"].as_str() {
            finish = Some(reason.to_string());
        }
    }
    if !done && finish.is_none() {
        return Err(LlmError::Transport("stream ended early".into()));
    }
    for (index, call) in calls {
        let id = if call.id.is_empty() {
            format!("call_{index}")
        } else {
            call.id
        };
        on_event(tool_event(id, call.name, &call.arguments, tools));
    }
    on_event(CompletionEvent::Done(
        finish.unwrap_or_else(|| "stop".into()),
    ));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tools() -> Vec<ToolSpec> {
        vec![ToolSpec::new("debug", "run", &[("command", "cmd")])]
    }

    #[test]
    fn stream_with_text_and_split_tool_call() {
        let stream = concat!(
            "data: {\"choices\":[{\"delta\":{\"content\":\"Hel\"}}]}\n\n",
            "data: {\"choices\":[{\"delta\":{\"content\":\"lo\"}}]}\n\n",
            ": keep-alive\n",
            "data: {\"choices\":[{\"delta\":{\"tool_calls\":[{\"index\":0,\"id\":\"c1\",\"function\":{\"name\":\"debug\",\"arguments\":\"{\\\"comm\"}}]}}]}\n\n",
            "data: {\"choices\":[{\"delta\":{\"tool_calls\":[{\"index\":0,\"function\":{\"arguments\":\"and\\\": \\\"p x\\\"}\"}}]}}]}\n\n",
            "data: {\"choices\":[{\"delta\":{},\"finish_reason\":\"tool_calls\"}]}\n\n",
            "data: [DONE]\n\n",
        );
        let mut events = Vec::new();
        parse_sse_stream(
            stream.as_bytes(),
            &tools(),
            &AtomicBool::new(false),
            &mut |e| events.push(e),
        )
        .unwrap();
        assert_eq!(events[0], CompletionEvent::TextDelta("Hel".into()));
        assert_eq!(events[1], CompletionEvent::TextDelta("lo".into()));
        match &events[2] {
            CompletionEvent::ToolCall(c) => {
                assert_eq!(c.id, "c1");
                assert_eq!(c.arguments["command"], "p x");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(events[3], CompletionEvent::Done("tool_calls".into()));
    }

    #[test]
    fn truncated_stream_is_an_error() {
        let stream = "data: {\"choices\":[{\"delta\":{\"content\":\"x\"}}]}\n";
        let r = parse_sse_stream(
            stream.as_bytes(),
            &tools(),
            &AtomicBool::new(false),
            &mut |_| {},
        );
        assert!(matches!(r, Err(LlmError::Transport(_))));
    }

    #[test]
    fn missing_key_fails_before_network() {
        let cfg = ModelConfig {
            api_key_env: "DBGCHAT_TEST_SURELY_UNSET_KEY".into(),
            base_url: "http://127.0.0.1:9".into(),
            ..ModelConfig::default()
        };
        assert!(matches!(
            RemoteBackend::from_env(cfg),
            Err(LlmError::Auth(_))
        ));
    }
}
