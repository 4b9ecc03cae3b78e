//! The command loop: lines typed at the prompt go either to the debugger
//! or to the model, and during a chat turn the model may run debugger and
//! navigation commands itself.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::enrich::{build_enriched_stack, EnrichOptions, StackEntry, DEFAULT_RADIUS};
use crate::llm::{ChatBackend, ChatMessage, CompletionEvent, ToolCallRequest, ToolSpec};
use crate::nav::{Navigator, SymbolLookup};
use crate::prompt::{
    error_section, make_followup_prompt, make_initial_prompt, HistoryEntry, PromptBundle,
    TokenBudget,
};
use crate::sanitizer::{
    command_word, sanitize, SanitizerPolicy, Verdict, NATIVE_COMMANDS, RESUMING_COMMANDS,
};
use crate::session::DebuggerSession;

pub const DEFAULT_TOOL_CAP: usize = 16;

/// Words routed to the debugger besides the read-only and resuming sets.
const OTHER_DEBUGGER_COMMANDS: &[&str] = &[
    "break",
    "b",
    "tbreak",
    "rbreak",
    "delete",
    "d",
    "clear",
    "disable",
    "enable",
    "condition",
    "ignore",
    "watch",
    "rwatch",
    "awatch",
    "display",
    "undisplay",
    "set",
    "show",
    "call",
    "output",
    "echo",
    "printf",
    "dprintf",
    "disassemble",
    "thread",
    "select-frame",
    "help",
    "info",
    "i",
    "ptype",
    "whatis",
    "explore",
    "search",
    "forward-search",
    "reverse-search",
    "tui",
    "layout",
    "source",
    "define",
    "document",
    "python",
    "catch",
    "tcatch",
    "handle",
    "core-file",
    "file",
];

/// Commands handled here rather than by the debugger.
pub const LOCAL_COMMANDS: &[&str] = &["code", "definition"];

pub fn is_debugger_command(line: &str) -> bool {
    let word = command_word(line.trim());
    !word.is_empty()
        && (NATIVE_COMMANDS.contains(&word)
            || RESUMING_COMMANDS.contains(&word)
            || OTHER_DEBUGGER_COMMANDS.contains(&word)
            || LOCAL_COMMANDS.contains(&word))
}

pub fn is_quit_command(line: &str) -> bool {
    matches!(line.trim(), "quit" | "q" | "exit")
}

/// The tools offered to the model.
pub fn tool_specs() -> Vec<ToolSpec> {
    vec![
        ToolSpec::new(
            "debug",
            "Run a GDB command on the stopped program and return its output.",
            &[("command", "The GDB command to run, e.g. `p x` or `bt`.")],
        ),
        ToolSpec::new(
            "code",
            "Return the source code around a location.",
            &[("location", "A location of the form filename:lineno.")],
        ),
        ToolSpec::new(
            "definition",
            "Return the definition of the first occurrence of a symbol on a line.",
            &[
                ("location", "A location of the form filename:lineno."),
                ("symbol", "The symbol to look up."),
            ],
        ),
    ]
}

/// Commands run by the user since the last prompt was sent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionHistory {
    entries: Vec<HistoryEntry>,
}

impl SessionHistory {
    pub fn push(&mut self, command: &str, output: &str) {
        self.entries.push(HistoryEntry::new(command, output));
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn take(&mut self) -> Vec<HistoryEntry> {
        std::mem::take(&mut self.entries)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DialogState {
    pub chat_in_progress: bool,
    pub messages: Vec<ChatMessage>,
    pub turn_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Streamed model text.
    Prose,
    /// A tool call and its output.
    Echo,
    /// Output of a command the user typed.
    Debugger,
    /// Errors and status lines from the tool itself.
    Notice,
}

pub trait Console {
    fn emit(&mut self, kind: OutputKind, text: &str);
}

/// Collects output in memory.
#[derive(Debug, Default, Clone)]
pub struct BufferConsole {
    pub items: Vec<(OutputKind, String)>,
}

impl BufferConsole {
    pub fn text(&self) -> String {
        self.items.iter().map(|(_, t)| t.as_str()).collect()
    }
}

impl Console for BufferConsole {
    fn emit(&mut self, kind: OutputKind, text: &str) {
        self.items.push((kind, text.to_string()));
    }
}

/// How a tool call is shown to the user: the call, an arrow, then the
/// output indented.
pub fn format_echo(call: &str, output: &str) -> String {
    let mut out = format!("{call} \u{2192}\n");
    if output.is_empty() {
        out.push_str("    (no output)\n");
    }
    for line in output.lines() {
        if line.is_empty() {
            out.push('\n');
        } else {
            out.push_str("    ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

/// Short form of a call, as the user would type it.
pub fn call_display(call: &ToolCallRequest) -> String {
    let arg = |k: &str| call.arguments.get(k).map(String::as_str).unwrap_or("");
    match call.name.as_str() {
        "debug" => arg("command").to_string(),
        "code" => format!("code {}", arg("location")),
        "definition" => format!("definition {} {}", arg("location"), arg("symbol")),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct WheelOptions {
    pub workspace_root: PathBuf,
    pub radius: u32,
    pub budget: TokenBudget,
    pub tool_cap: usize,
}

impl WheelOptions {
    pub fn new(workspace_root: impl Into<PathBuf>) -> Self {
        WheelOptions {
            workspace_root: workspace_root.into(),
            radius: DEFAULT_RADIUS,
            budget: TokenBudget::default(),
            tool_cap: DEFAULT_TOOL_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnEnd {
    /// The model answered without further tool calls.
    Answered,
    ToolCap,
    Interrupted,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnSummary {
    pub tool_calls: usize,
    pub end: TurnEnd,
    /// Text of the last assistant message.
    pub final_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputOutcome {
    Empty,
    Quit,
    Debugger,
    Chat(TurnSummary),
    /// The chat path failed before anything was sent.
    NotSent(String),
}

/// Line-delimited JSON log of everything that crosses the loop.
pub struct TranscriptLog {
    out: Box<dyn Write + Send>,
}

impl TranscriptLog {
    pub fn new(out: Box<dyn Write + Send>) -> Self {
        TranscriptLog { out }
    }

    fn write(&mut self, event: Value) {
        // A failing log must not take the session down.
        let _ = writeln!(self.out, "{event}");
        let _ = self.out.flush();
    }
}

pub struct Wheel {
    pub session: DebuggerSession,
    pub navigator: Navigator,
    backend: Box<dyn ChatBackend>,
    policy: SanitizerPolicy,
    options: WheelOptions,
    tools: Vec<ToolSpec>,
    pub history: SessionHistory,
    pub dialog: DialogState,
    log: Option<TranscriptLog>,
    cancel: Arc<AtomicBool>,
}

impl Wheel {
    pub fn new(
        session: DebuggerSession,
        navigator: Navigator,
        backend: Box<dyn ChatBackend>,
        policy: SanitizerPolicy,
        options: WheelOptions,
    ) -> Self {
        Wheel {
            session,
            navigator,
            backend,
            policy,
            options,
            tools: tool_specs(),
            history: SessionHistory::default(),
            dialog: DialogState::default(),
            log: None,
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Starts logging; the first line describes the configuration.
    pub fn set_log(&mut self, out: Box<dyn Write + Send>) {
        let mut log = TranscriptLog::new(out);
        log.write(json!({
            "event": "session",
            "backend": self.backend.describe(),
            "policy": self.policy.describe(),
            "budget": self.options.budget.max_tokens,
            "tool_cap": self.options.tool_cap,
        }));
        self.log = Some(log);
    }

    fn log(&mut self, event: Value) {
        if let Some(l) = self.log.as_mut() {
            l.write(event);
        }
    }

    /// Setting the flag aborts the chat turn in progress.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.cancel)
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn policy(&self) -> &SanitizerPolicy {
        &self.policy
    }

    /// The error and the innermost user frame, shown once at startup.
    pub fn stop_report(&mut self) -> String {
        let Some(stop) = self.session.last_stop().cloned() else {
            return "The program has not stopped.\n".into();
        };
        let mut out = error_section(&stop);
        if stop.is_exit() {
            return out;
        }
        let opts = self.enrich_options();
        if let Ok(stack) = build_enriched_stack(&mut self.session, &opts) {
            let current = stack.entries.iter().rev().find_map(|e| match e {
                StackEntry::Frame(f) if f.current => Some(f.clone()),
                _ => None,
            });
            if let Some(f) = current {
                let single = crate::enrich::EnrichedStack {
                    entries: vec![StackEntry::Frame(f)],
                    total_frames: 1,
                };
                out.push('\n');
                out.push_str(&single.render());
            }
        }
        out
    }

    /// Selects the innermost frame in user code, so commands typed at the
    /// prompt see the user's variables rather than libc's. Returns its index.
    pub fn focus_user_frame(&mut self) -> Option<usize> {
        let frames = self.session.backtrace().ok()?;
        let root = self.options.workspace_root.clone();
        let index = frames
            .iter()
            .find(|f| crate::enrich::is_user_frame(f, &root))?
            .index;
        if index != 0 {
            self.session.select_frame(index).ok()?;
        }
        Some(index)
    }

    fn enrich_options(&self) -> EnrichOptions {
        EnrichOptions {
            workspace_root: self.options.workspace_root.clone(),
            radius: self.options.radius,
        }
    }

    /// Handles one line typed at the prompt.
    pub fn handle_input(&mut self, line: &str, console: &mut dyn Console) -> InputOutcome {
        let line = line.trim();
        if line.is_empty() {
            return InputOutcome::Empty;
        }
        if is_quit_command(line) {
            return InputOutcome::Quit;
        }
        self.log(json!({"event": "user_input", "text": line}));
        if is_debugger_command(line) {
            let output = self.run_local_or_debugger(line);
            let mut shown = output.clone();
            if !shown.is_empty() && !shown.ends_with('\n') {
                shown.push('\n');
            }
            console.emit(OutputKind::Debugger, &shown);
            self.log(json!({"event": "debugger_command", "command": line, "output": output}));
            self.history.push(line, &output);
            return InputOutcome::Debugger;
        }
        match self.send_chat(line, console) {
            Ok(summary) => InputOutcome::Chat(summary),
            Err(msg) => {
                console.emit(OutputKind::Notice, &format!("{msg}\n"));
                self.log(json!({"event": "not_sent", "reason": msg}));
                InputOutcome::NotSent(msg)
            }
        }
    }

    /// Commands typed by the user: no sanitizing.
    fn run_local_or_debugger(&mut self, line: &str) -> String {
        let word = command_word(line);
        let rest = line[word.len()..].trim();
        match word {
            "code" => self.navigator.code(rest).unwrap_or_else(|e| e.to_string()),
            "definition" => {
                let mut parts = rest.split_whitespace();
                let (loc, symbol) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
                self.definition(loc, symbol)
            }
            _ => self.session.run_command(line),
        }
    }

    fn definition(&mut self, loc: &str, symbol: &str) -> String {
        let fallback: &mut dyn SymbolLookup = &mut self.session;
        match self.navigator.definition(loc, symbol, Some(fallback)) {
            Ok(d) => d.render(),
            Err(e) => e.to_string(),
        }
    }

    fn send_chat(&mut self, text: &str, console: &mut dyn Console) -> Result<TurnSummary, String> {
        let new_messages = if self.dialog.chat_in_progress {
            make_followup_prompt(self.history.entries(), text)
        } else {
            let mut bundle = PromptBundle::new(text)
                .with_inputs(
                    self.session.target_args().to_vec(),
                    self.session.stdin_text().map(str::to_string),
                )
                .with_history(self.history.entries().to_vec());
            if let Some(stop) = self.session.last_stop().cloned() {
                bundle = bundle.with_error(error_section(&stop));
                if !stop.is_exit() {
                    let opts = self.enrich_options();
                    match build_enriched_stack(&mut self.session, &opts) {
                        Ok(stack) => bundle = bundle.with_stack(&stack),
                        Err(e) => console.emit(
                            OutputKind::Notice,
                            &format!("(stack trace unavailable: {e})\n"),
                        ),
                    }
                }
            }
            make_initial_prompt(&bundle, self.options.budget).map_err(|e| e.to_string())?
        };
        self.history.take();
        self.log(json!({"event": "prompt", "messages": new_messages}));
        self.dialog.messages.extend(new_messages);
        self.dialog.chat_in_progress = true;
        Ok(self.run_chat_turn(console))
    }

    /// Plays one chat turn to completion, running the model's tool calls.
    pub fn run_chat_turn(&mut self, console: &mut dyn Console) -> TurnSummary {
        self.cancel.store(false, Ordering::SeqCst);
        self.dialog.turn_count += 1;
        let selected = self.session.selected_frame().ok();
        let mut executed = 0usize;
        let mut final_text: String;
        let end = loop {
            let mut text = String::new();
            let mut calls: Vec<Result<ToolCallRequest, (ToolCallRequest, String)>> = Vec::new();
            let result = {
                let tools = &self.tools;
                let cancel = &*self.cancel;
                let text = &mut text;
                let calls = &mut calls;
                let console = &mut *console;
                self.backend
                    .complete(&self.dialog.messages, tools, cancel, &mut |ev| match ev {
                        CompletionEvent::TextDelta(t) => {
                            console.emit(OutputKind::Prose, &t);
                            text.push_str(&t);
                        }
                        CompletionEvent::ToolCall(c) => calls.push(Ok(c)),
                        CompletionEvent::MalformedToolCall { id, name, error } => {
                            let req = ToolCallRequest {
                                id,
                                name,
                                arguments: Default::default(),
                            };
                            calls.push(Err((req, error)));
                        }
                        CompletionEvent::Done(_) => {}
                    })
            };
            if !text.is_empty() && !text.ends_with('\n') {
                console.emit(OutputKind::Prose, "\n");
            }
            final_text = text.clone();
            if let Err(e) = result {
                if !text.is_empty() {
                    self.dialog
                        .messages
                        .push(ChatMessage::assistant(text.clone(), vec![]));
                    self.log(json!({"event": "assistant", "text": text}));
                }
                let interrupted = e == crate::llm::LlmError::Interrupted;
                let msg = if interrupted {
                    "(turn interrupted)".to_string()
                } else {
                    format!("(model error: {e})")
                };
                console.emit(OutputKind::Notice, &format!("{msg}\n"));
                break if interrupted {
                    TurnEnd::Interrupted
                } else {
                    TurnEnd::Error(e.to_string())
                };
            }
            // Calls naming tools we never offered cannot be answered in a
            // well-formed conversation; they are dropped with a notice.
            calls.retain(|c| {
                let name = match c {
                    Ok(r) => &r.name,
                    Err((r, _)) => &r.name,
                };
                let known = self.tools.iter().any(|t| &t.name == name);
                if !known {
                    console.emit(
                        OutputKind::Notice,
                        &format!("(ignored call to unknown tool `{name}`)\n"),
                    );
                }
                known
            });
            let requests: Vec<ToolCallRequest> = calls
                .iter()
                .map(|c| match c {
                    Ok(r) => r.clone(),
                    Err((r, _)) => r.clone(),
                })
                .collect();
            self.dialog
                .messages
                .push(ChatMessage::assistant(text.clone(), requests.clone()));
            self.log(json!({"event": "assistant", "text": text, "tool_calls": requests}));
            if calls.is_empty() {
                break TurnEnd::Answered;
            }
            let mut stop: Option<TurnEnd> = None;
            for call in calls {
                let (req, output, denied, ran) = match call {
                    _ if stop.is_some() => {
                        let req = match call {
                            Ok(r) | Err((r, _)) => r,
                        };
                        let note = match stop {
                            Some(TurnEnd::Interrupted) => {
                                "Interrupted by the user; not run.".to_string()
                            }
                            _ => format!(
                                "Not run: the limit of {} tool calls per turn was reached.",
                                self.options.tool_cap
                            ),
                        };
                        self.answer(&req, &note, false, false);
                        continue;
                    }
                    Err((req, error)) => (req, format!("Invalid call: {error}"), false, false),
                    Ok(req) => {
                        if self.cancel.load(Ordering::SeqCst) {
                            stop = Some(TurnEnd::Interrupted);
                            self.answer(&req, "Interrupted by the user; not run.", false, false);
                            continue;
                        }
                        if executed == self.options.tool_cap {
                            stop = Some(TurnEnd::ToolCap);
                            let note = format!(
                                "Not run: the limit of {} tool calls per turn was reached.",
                                self.options.tool_cap
                            );
                            console.emit(
                                OutputKind::Notice,
                                &format!(
                                    "(stopped after {} tool calls this turn)\n",
                                    self.options.tool_cap
                                ),
                            );
                            self.answer(&req, &note, false, false);
                            continue;
                        }
                        executed += 1;
                        let (output, denied) = self.dispatch(&req);
                        (req, output, denied, !denied)
                    }
                };
                console.emit(OutputKind::Echo, &format_echo(&call_display(&req), &output));
                self.answer(&req, &output, denied, ran);
            }
            if let Some(end) = stop {
                if end == TurnEnd::Interrupted {
                    console.emit(OutputKind::Notice, "(turn interrupted)\n");
                }
                break end;
            }
        };
        if let Some(before) = selected {
            if self.session.selected_frame().ok() != Some(before) {
                let _ = self.session.select_frame(before);
            }
        }
        self.log(json!({"event": "turn_end", "end": format!("{end:?}"), "tool_calls": executed}));
        TurnSummary {
            tool_calls: executed,
            end,
            final_text,
        }
    }

    fn answer(&mut self, req: &ToolCallRequest, output: &str, denied: bool, executed: bool) {
        self.dialog
            .messages
            .push(ChatMessage::tool(req.id.clone(), output));
        self.log(json!({
            "event": "tool_result",
            "id": req.id,
            "name": req.name,
            "call": call_display(req),
            "output": output,
            "denied": denied,
            "executed": executed,
        }));
    }

    /// Runs one model-issued call: `(output, denied)`.
    fn dispatch(&mut self, req: &ToolCallRequest) -> (String, bool) {
        let arg = |k: &str| req.arguments.get(k).cloned().unwrap_or_default();
        match req.name.as_str() {
            "debug" => {
                let command = arg("command");
                match sanitize(&command, &self.policy) {
                    Verdict::Allow => (self.session.run_command(&command), false),
                    Verdict::Deny(reason) => (format!("Command denied: {reason}"), true),
                }
            }
            "code" => (
                self.navigator
                    .code(&arg("location"))
                    .unwrap_or_else(|e| e.to_string()),
                false,
            ),
            "definition" => (self.definition(&arg("location"), &arg("symbol")), false),
            other => (format!("Unknown tool `{other}`"), false),
        }
    }

    pub fn shutdown(&mut self) {
        self.navigator.shutdown();
        self.session.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier() {
        assert!(is_debugger_command("p x"));
        assert!(is_debugger_command("p/x y"));
        assert!(is_debugger_command("bt"));
        assert!(is_debugger_command("code a.c:3"));
        assert!(!is_debugger_command("Why doesn't stats have 5 elements?"));
        assert!(!is_debugger_command("why?"));
        assert!(!is_debugger_command(""));
    }

    #[test]
    fn echo_layout() {
        assert_eq!(format_echo("p len", "150"), "p len \u{2192}\n    150\n");
        assert_eq!(format_echo("bt", ""), "bt \u{2192}\n    (no output)\n");
        assert_eq!(format_echo("x", "a\n\nb"), "x \u{2192}\n    a\n\n    b\n");
    }
}
