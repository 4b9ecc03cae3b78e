//! A small Language Server Protocol client: Content-Length framing,
//! request/response correlation, and two transports (a child process and
//! a recorded transcript).

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const DEFAULT_LSP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LspError {
    #[error("language server unavailable: {0}")]
    Unavailable(String),
    #[error("language server transport error: {0}")]
    Transport(String),
    #[error("language server error {code}: {message}")]
    ErrorResponse { code: i64, message: String },
    #[error("language server did not answer `{method}` within {timeout:?}")]
    Timeout { method: String, timeout: Duration },
    #[error("`{0}` sent before the initialize handshake")]
    NotInitialized(String),
}

/// Frames one message.
pub fn encode_message(msg: &Value) -> Vec<u8> {
    let body = msg.to_string();
    let mut out = format!("Content-Length: {}\r\n\r\n", body.len()).into_bytes();
    out.extend_from_slice(body.as_bytes());
    out
}

/// Reads one framed message; `Ok(None)` at a clean end of stream.
pub fn read_message(reader: &mut impl BufRead) -> Result<Option<Value>, LspError> {
    let mut length: Option<usize> = None;
    let mut saw_header = false;
    loop {
        let mut line = String::new();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| LspError::Transport(e.to_string()))?;
        if n == 0 {
            return if saw_header {
                Err(LspError::Transport("stream ended inside a header".into()))
            } else {
                Ok(None)
            };
        }
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            if saw_header {
                break;
            }
            continue;
        }
        saw_header = true;
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                length = Some(value.trim().parse().map_err(|_| {
                    LspError::Transport(format!("bad Content-Length `{}`", value.trim()))
                })?);
            }
        }
    }
    let length = length.ok_or_else(|| LspError::Transport("missing Content-Length".into()))?;
    let mut body = vec![0u8; length];
    reader
        .read_exact(&mut body)
        .map_err(|e| LspError::Transport(e.to_string()))?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| LspError::Transport(format!("bad message body: {e}")))
}

/// Splits a byte stream into messages.
pub fn decode_messages(bytes: &[u8]) -> Result<Vec<Value>, LspError> {
    let mut reader = BufReader::new(bytes);
    let mut out = Vec::new();
    while let Some(m) = read_message(&mut reader)? {
        out.push(m);
    }
    Ok(out)
}

pub trait LspTransport: Send {
    fn send(&mut self, msg: &Value) -> Result<(), LspError>;
    /// Next message from the server; `Ok(None)` when `timeout` passes.
    fn recv(&mut self, timeout: Duration) -> Result<Option<Value>, LspError>;
    fn shutdown(&mut self) {}
}

/// A language server running as a child process.
pub struct ChildTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    incoming: Receiver<Result<Value, LspError>>,
}

impl ChildTransport {
    pub fn spawn(program: &Path, args: &[String], cwd: &Path) -> Result<Self, LspError> {
        let mut child = Command::new(program)
            .args(args)
            .current_dir(cwd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .process_group(0)
            .spawn()
            .map_err(|e| LspError::Unavailable(format!("{}: {e}", program.display())))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                match read_message(&mut reader) {
                    Ok(Some(m)) => {
                        if tx.send(Ok(m)).is_err() {
                            break;
                        }
                    }
                    Ok(None) => {
                        let _ =
                            tx.send(Err(LspError::Transport("server closed its output".into())));
                        break;
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(ChildTransport {
            child,
            stdin,
            incoming: rx,
        })
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }
}

impl LspTransport for ChildTransport {
    fn send(&mut self, msg: &Value) -> Result<(), LspError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| LspError::Transport("server input closed".into()))?;
        stdin
            .write_all(&encode_message(msg))
            .and_then(|_| stdin.flush())
            .map_err(|e| LspError::Transport(e.to_string()))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Value>, LspError> {
        match self.incoming.recv_timeout(timeout) {
            Ok(r) => r.map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                Err(LspError::Transport("server output closed".into()))
            }
        }
    }

    fn shutdown(&mut self) {
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// One step of a recorded session: a client message and the server
/// messages that arrived before the next client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub sent: Value,
    #[serde(default)]
    pub received: Vec<Value>,
}

/// A recorded session, stored as JSON lines after a header
/// `{"lsp_transcript":1,"root":..,"server":..}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub root: Option<String>,
    pub server: Option<String>,
    pub steps: Vec<TranscriptStep>,
}

impl Transcript {
    pub fn parse(text: &str) -> Result<Self, LspError> {
        let mut t = Transcript::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Value = serde_json::from_str(line)
                .map_err(|e| LspError::Transport(format!("transcript line {}: {e}", n + 1)))?;
            if v.get("lsp_transcript").is_some() {
                t.root = v["root"].as_str().map(str::to_string);
                t.server = v["server"].as_str().map(str::to_string);
                continue;
            }
            let step: TranscriptStep = serde_json::from_value(v)
                .map_err(|e| LspError::Transport(format!("transcript line {}: {e}", n + 1)))?;
            t.steps.push(step);
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, LspError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LspError::Transport(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out =
            json!({"lsp_transcript": 1, "root": self.root, "server": self.server}).to_string();
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Rewrites the recording root to `root` in every message.
    pub fn relocate(mut self, root: &str) -> Self {
        if let Some(from) = self.root.replace(root.to_string()) {
            if from != root {
                for s in &mut self.steps {
                    replace_strings(&mut s.sent, &from, root);
                    for r in &mut s.received {
                        replace_strings(r, &from, root);
                    }
                }
            }
        }
        self
    }
}

fn replace_strings(v: &mut Value, from: &str, to: &str) {
    match v {
        Value::String(s) if s.contains(from) => *s = s.replace(from, to),
        Value::Array(items) => items.iter_mut().for_each(|i| replace_strings(i, from, to)),
        Value::Object(map) => map.values_mut().for_each(|i| replace_strings(i, from, to)),
        _ => {}
    }
}

/// Answers from a [`Transcript`]. A client message is matched to the first
/// unused recorded step with the same method and params; the server
/// messages of that step are then delivered, with response ids rewritten
/// to the id of the live request. Unmatched requests get an error reply.
pub struct ReplayTransport {
    steps: Vec<(TranscriptStep, bool)>,
    queue: VecDeque<Value>,
}

impl ReplayTransport {
    pub fn new(transcript: Transcript) -> Self {
        ReplayTransport {
            steps: transcript.steps.into_iter().map(|s| (s, false)).collect(),
            queue: VecDeque::new(),
        }
    }
}

impl LspTransport for ReplayTransport {
    fn send(&mut self, msg: &Value) -> Result<(), LspError> {
        let Some(method) = msg.get("method") else {
            // A reply to a server request.
            return Ok(());
        };
        let params = msg.get("params").cloned().unwrap_or(Value::Null);
        let matches = |s: &TranscriptStep| {
            s.sent.get("method") == Some(method)
                && s.sent.get("params").cloned().unwrap_or(Value::Null) == params
        };
        let found = self
            .steps
            .iter()
            .position(|(s, used)| !used && matches(s))
            .or_else(|| self.steps.iter().position(|(s, _)| matches(s)));
        let live_id = msg.get("id").cloned();
        match found {
            Some(i) => {
                self.steps[i].1 = true;
                let recorded_id = self.steps[i].0.sent.get("id").cloned();
                for r in &self.steps[i].0.received {
                    let mut r = r.clone();
                    let is_response = r.get("method").is_none();
                    if is_response && recorded_id.is_some() && r.get("id") == recorded_id.as_ref() {
                        r["id"] = live_id.clone().unwrap_or(Value::Null);
                    }
                    self.queue.push_back(r);
                }
            }
            None => {
                if let Some(id) = live_id {
                    self.queue.push_back(json!({
                        "jsonrpc": "2.0",
                        "id": id,
                        "error": {"code": -32603, "message": format!("no recording for `{}`", method.as_str().unwrap_or("?"))},
                    }));
                }
            }
        }
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> Result<Option<Value>, LspError> {
        Ok(self.queue.pop_front())
    }
}

/// Wraps a transport and records every exchange into a shared log.
pub struct RecordingTransport<T: LspTransport> {
    inner: T,
    steps: Arc<Mutex<Vec<TranscriptStep>>>,
}

impl<T: LspTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            steps: Arc::default(),
        }
    }

    pub fn log(&self) -> Arc<Mutex<Vec<TranscriptStep>>> {
        Arc::clone(&self.steps)
    }
}

impl<T: LspTransport> LspTransport for RecordingTransport<T> {
    fn send(&mut self, msg: &Value) -> Result<(), LspError> {
        self.steps.lock().expect("log lock").push(TranscriptStep {
            sent: msg.clone(),
            received: Vec::new(),
        });
        self.inner.send(msg)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<Value>, LspError> {
        let m = self.inner.recv(timeout)?;
        if let (Some(m), Some(last)) = (&m, self.steps.lock().expect("log lock").last_mut()) {
            last.received.push(m.clone());
        }
        Ok(m)
    }

    fn shutdown(&mut self) {
        self.inner.shutdown()
    }
}

/// A zero-based position in a document, in UTF-16 code units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: u32,
    pub character: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: PathBuf,
    pub start: Position,
}

pub struct LspClient {
    transport: Box<dyn LspTransport>,
    next_id: i64,
    initialized: bool,
    open_documents: BTreeSet<PathBuf>,
    root: PathBuf,
    pub timeout: Duration,
    capabilities: Value,
}

impl LspClient {
    pub fn new(transport: Box<dyn LspTransport>, root: &Path) -> Self {
        LspClient {
            transport,
            next_id: 1,
            initialized: false,
            open_documents: BTreeSet::new(),
            root: root.to_path_buf(),
            timeout: DEFAULT_LSP_TIMEOUT,
            capabilities: Value::Null,
        }
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn capabilities(&self) -> &Value {
        &self.capabilities
    }

    pub fn open_documents(&self) -> &BTreeSet<PathBuf> {
        &self.open_documents
    }

    pub fn notify(&mut self, method: &str, params: Value) -> Result<(), LspError> {
        if !self.initialized && method != "initialized" && method != "exit" {
            return Err(LspError::NotInitialized(method.to_string()));
        }
        self.transport
            .send(&json!({"jsonrpc": "2.0", "method": method, "params": params}))
    }

    pub fn request(&mut self, method: &str, params: Value) -> Result<Value, LspError> {
        if !self.initialized && method != "initialize" {
            return Err(LspError::NotInitialized(method.to_string()));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.transport
            .send(&json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params}))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(msg) = self.transport.recv(left)? else {
                return Err(LspError::Timeout {
                    method: method.to_string(),
                    timeout: self.timeout,
                });
            };
            if let Some(req_id) = msg.get("id").filter(|_| msg.get("method").is_some()) {
                // Server-initiated request; nothing we offer needs a real answer.
                self.transport
                    .send(&json!({"jsonrpc": "2.0", "id": req_id, "result": null}))?;
                continue;
            }
            if msg.get("id") != Some(&json!(id)) {
                continue;
            }
            if let Some(err) = msg.get("error") {
                return Err(LspError::ErrorResponse {
                    code: err["code"].as_i64().unwrap_or(0),
                    message: err["message"].as_str().unwrap_or("").to_string(),
                });
            }
            return Ok(msg.get("result").cloned().unwrap_or(Value::Null));
        }
    }

    /// Runs the initialize handshake and returns the server capabilities.
    pub fn initialize(&mut self) -> Result<Value, LspError> {
        let params = json!({
            "processId": null,
            "rootUri": path_to_uri(&self.root),
            "capabilities": {
                "textDocument": {
                    "definition": {"linkSupport": false},
                    "synchronization": {"didSave": false},
                },
            },
        });
        let result = self.request("initialize", params)?;
        self.initialized = true;
        self.notify("initialized", json!({}))?;
        self.capabilities = result.get("capabilities").cloned().unwrap_or(Value::Null);
        Ok(self.capabilities.clone())
    }

    /// Sends `didOpen` for `path` unless it is already open.
    pub fn open_document(&mut self, path: &Path) -> Result<(), LspError> {
        if self.open_documents.contains(path) {
            return Ok(());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| LspError::Transport(format!("{}: {e}", path.display())))?;
        self.notify(
            "textDocument/didOpen",
            json!({"textDocument": {
                "uri": path_to_uri(path),
                "languageId": language_id(path),
                "version": 1,
                "text": text,
            }}),
        )?;
        self.open_documents.insert(path.to_path_buf());
        Ok(())
    }

    /// Waits until the server has published diagnostics for every open
    /// document, which for clangd means each has been parsed and indexed.
    /// Gives up quietly at the timeout.
    pub fn wait_until_parsed(&mut self) -> Result<(), LspError> {
        let mut pending: BTreeSet<String> =
            self.open_documents.iter().map(|p| path_to_uri(p)).collect();
        let deadline = Instant::now() + self.timeout;
        while !pending.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(msg) = self.transport.recv(left)? else {
                break;
            };
            if msg["method"] == "textDocument/publishDiagnostics" {
                if let Some(uri) = msg["params"]["uri"].as_str() {
                    pending.remove(uri);
                }
            }
        }
        Ok(())
    }

    pub fn definition(&mut self, path: &Path, pos: Position) -> Result<Vec<Location>, LspError> {
        self.open_document(path)?;
        let result = self.request(
            "textDocument/definition",
            json!({
                "textDocument": {"uri": path_to_uri(path)},
                "position": {"line": pos.line, "character": pos.character},
            }),
        )?;
        Ok(parse_locations(&result))
    }

    /// Polite shutdown; errors are ignored because the process is going
    /// away regardless.
    pub fn shutdown(&mut self) {
        if self.initialized {
            let saved = self.timeout;
            self.timeout = Duration::from_secs(2);
            let _ = self.request("shutdown", Value::Null);
            let _ = self.notify("exit", Value::Null);
            self.timeout = saved;
            self.initialized = false;
        }
        self.transport.shutdown();
    }
}

impl Drop for LspClient {
    fn drop(&mut self) {
        self.transport.shutdown();
    }
}

fn language_id(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("c") | Some("h") => "c",
        _ => "cpp",
    }
}

pub fn path_to_uri(path: &Path) -> String {
    url::Url::from_file_path(path)
        .map(|u| u.to_string())
        .unwrap_or_else(|_| format!("file://{}", path.display()))
}

pub fn uri_to_path(uri: &str) -> Option<PathBuf> {
    url::Url::parse(uri).ok()?.to_file_path().ok()
}

/// Accepts `Location`, `Location[]`, `LocationLink[]` or null.
pub fn parse_locations(result: &Value) -> Vec<Location> {
    let items: Vec<&Value> = match result {
        Value::Array(a) => a.iter().collect(),
        Value::Object(_) => vec![result],
        _ => Vec::new(),
    };
    items
        .into_iter()
        .filter_map(|item| {
            let (uri, range) = match item.get("targetUri") {
                Some(uri) => (uri, item.get("targetSelectionRange")?),
                None => (item.get("uri")?, item.get("range")?),
            };
            Some(Location {
                path: uri_to_path(uri.as_str()?)?,
                start: Position {
                    line: range["start"]["line"].as_u64()? as u32,
                    character: range["start"]["character"].as_u64()? as u32,
                },
            })
        })
        .collect()
}
