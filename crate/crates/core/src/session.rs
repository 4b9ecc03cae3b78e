//! Structured view of a debugging session on top of the MI driver.

use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::Regex;
use thiserror::Error;

use crate::mi::{
    quote_c_string, spawn_debugger, DebuggerConfig, DebuggerHandle, MiError, MiOutput, MiRecord,
    MiTuple, MiValue, StreamKind,
};

/// Matches the assertion messages printed by glibc, musl and BSD libcs.
pub const DEFAULT_ASSERTION_PATTERN: &str = r"Assertion [`'](?P<expr>.+)' failed|Assertion failed: \(?(?P<expr_alt>.+?)\)?(?:,? \(?(?:function|file) .*|$)";

/// Lines of captured target output searched for an assertion message.
const ASSERTION_SCAN_LINES: usize = 50;

pub const DEFAULT_FRAME_CAP: usize = 200;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Mi(#[from] MiError),
    #[error("the target is not stopped")]
    NotStopped,
    #[error("no frame at index {0}")]
    BadFrameIndex(usize),
    #[error("{0}")]
    EvaluationError(String),
    #[error("unexpected debugger response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// 0 is the innermost frame.
    pub index: usize,
    pub function: String,
    pub file: Option<PathBuf>,
    pub line: Option<u32>,
    pub pc: Option<String>,
}

impl Frame {
    fn from_mi(t: &MiValue) -> Option<Frame> {
        let index = t.get_str("level")?.parse().ok()?;
        let function = t.get_str("func").unwrap_or("??").to_string();
        let file = t.get_str("fullname").or_else(|| t.get_str("file"));
        let line = t
            .get_str("line")
            .and_then(|l| l.parse::<u32>().ok())
            .filter(|&l| l > 0);
        let (file, line) = match (file, line) {
            (Some(f), Some(l)) => (Some(PathBuf::from(f)), Some(l)),
            _ => (None, None),
        };
        Some(Frame {
            index,
            function,
            file,
            line,
            pc: t.get_str("addr").map(str::to_string),
        })
    }

    pub fn location(&self) -> Option<(&Path, u32)> {
        Some((self.file.as_deref()?, self.line?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableBinding {
    pub name: String,
    pub declared_type: String,
    pub raw_value: String,
    pub is_pointer: bool,
}

impl VariableBinding {
    pub fn new(name: &str, declared_type: &str, raw_value: &str) -> Self {
        VariableBinding {
            name: name.to_string(),
            declared_type: declared_type.to_string(),
            raw_value: raw_value.to_string(),
            is_pointer: is_pointer_type(declared_type),
        }
    }
}

/// Lexical pointer test on a type name as GDB prints it.
pub fn is_pointer_type(ty: &str) -> bool {
    let ty = ty.trim();
    ty.ends_with('*') || ty.contains("(*)")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    Breakpoint,
    Signal,
    Exited(i32),
    AssertionFailure,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopEvent {
    pub reason: StopReason,
    pub signal_name: Option<String>,
    pub signal_meaning: Option<String>,
    pub frame: Option<Frame>,
    /// Human-readable description; for assertion failures, the message line.
    pub detail: String,
    /// The failed assertion's expression, when it could be extracted.
    pub assertion: Option<String>,
}

impl StopEvent {
    fn from_stopped(payload: &MiTuple) -> StopEvent {
        let reason_text = payload.get_str("reason").unwrap_or("");
        let signal_name = payload.get_str("signal-name").map(str::to_string);
        let signal_meaning = payload.get_str("signal-meaning").map(str::to_string);
        let frame = payload.get("frame").and_then(|f| {
            // *stopped frames carry no level; they are always the innermost.
            let mut f = f.clone();
            if let MiValue::Tuple(t) = &mut f {
                if t.get("level").is_none() {
                    t.0.push(("level".into(), MiValue::Const("0".into())));
                }
            }
            Frame::from_mi(&f)
        });
        let exit_code = payload
            .get_str("exit-code")
            .and_then(|c| i32::from_str_radix(c, 8).ok());
        let (reason, detail) = match reason_text {
            "signal-received" => (
                StopReason::Signal,
                format!(
                    "Program received signal {}, {}.",
                    signal_name.as_deref().unwrap_or("?"),
                    signal_meaning.as_deref().unwrap_or("unknown signal")
                ),
            ),
            "breakpoint-hit" => (
                StopReason::Breakpoint,
                format!(
                    "Breakpoint {} hit.",
                    payload.get_str("bkptno").unwrap_or("?")
                ),
            ),
            "exited-normally" => (StopReason::Exited(0), "Program exited normally.".into()),
            "exited" => {
                let code = exit_code.unwrap_or(0);
                (
                    StopReason::Exited(code),
                    format!("Program exited with code {code}."),
                )
            }
            "exited-signalled" => (
                StopReason::Other(reason_text.into()),
                format!(
                    "Program terminated with signal {}, {}.",
                    signal_name.as_deref().unwrap_or("?"),
                    signal_meaning.as_deref().unwrap_or("unknown signal")
                ),
            ),
            other => (
                StopReason::Other(other.into()),
                format!("Program stopped ({other})."),
            ),
        };
        let signal_name = match reason {
            StopReason::Signal => Some(signal_name.unwrap_or_else(|| "?".into())),
            _ => signal_name,
        };
        StopEvent {
            reason,
            signal_name,
            signal_meaning,
            frame,
            detail,
            assertion: None,
        }
    }

    pub fn is_exit(&self) -> bool {
        matches!(self.reason, StopReason::Exited(_))
            || self.reason == StopReason::Other("exited-signalled".into())
    }

    /// Reclassifies an abort as an assertion failure when the target's
    /// recent output carries an assertion message.
    pub fn detect_assertion(&mut self, captured_output: &str, pattern: &Regex) {
        if self.reason != StopReason::Signal || self.signal_name.as_deref() != Some("SIGABRT") {
            return;
        }
        let lines: Vec<&str> = captured_output.lines().collect();
        let tail = &lines[lines.len().saturating_sub(ASSERTION_SCAN_LINES)..];
        for line in tail.iter().rev() {
            if let Some(caps) = pattern.captures(line) {
                self.reason = StopReason::AssertionFailure;
                self.assertion = caps
                    .name("expr")
                    .or_else(|| caps.name("expr_alt"))
                    .map(|m| m.as_str().to_string());
                self.detail = format!("{}\n{}", self.detail, line.trim_end());
                return;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub debugger: DebuggerConfig,
    pub assertion_pattern: Regex,
    pub frame_cap: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            debugger: DebuggerConfig::default(),
            assertion_pattern: Regex::new(DEFAULT_ASSERTION_PATTERN).expect("valid pattern"),
            frame_cap: DEFAULT_FRAME_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TargetState {
    NotStarted,
    Stopped(StopEvent),
    Exited(StopEvent),
}

/// A debugger session on one target.
#[derive(Debug)]
pub struct DebuggerSession {
    handle: DebuggerHandle,
    state: TargetState,
    assertion_pattern: Regex,
    frame_cap: usize,
    target_args: Vec<String>,
    stdin_text: Option<String>,
}

impl DebuggerSession {
    pub fn launch(
        executable: &Path,
        target_args: &[String],
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let handle = spawn_debugger(executable, target_args, &config.debugger)?;
        let stdin_text = config
            .debugger
            .stdin_path
            .as_deref()
            .and_then(|p| std::fs::read(p).ok())
            .map(|b| String::from_utf8_lossy(&b).into_owned());
        let mut session = Self::from_handle(handle, config);
        session.target_args = target_args.to_vec();
        session.stdin_text = stdin_text;
        Ok(session)
    }

    pub fn from_handle(handle: DebuggerHandle, config: SessionConfig) -> Self {
        DebuggerSession {
            handle,
            state: TargetState::NotStarted,
            assertion_pattern: config.assertion_pattern,
            frame_cap: config.frame_cap.max(1),
            target_args: Vec::new(),
            stdin_text: None,
        }
    }

    pub fn handle(&self) -> &DebuggerHandle {
        &self.handle
    }

    pub fn handle_mut(&mut self) -> &mut DebuggerHandle {
        &mut self.handle
    }

    pub fn target_args(&self) -> &[String] {
        &self.target_args
    }

    pub fn set_target_args(&mut self, args: Vec<String>) {
        self.target_args = args;
    }

    pub fn stdin_text(&self) -> Option<&str> {
        self.stdin_text.as_deref()
    }

    pub fn captured_output(&mut self) -> String {
        self.handle.captured_output()
    }

    /// The most recent stop, including exits.
    pub fn last_stop(&self) -> Option<&StopEvent> {
        match &self.state {
            TargetState::Stopped(e) | TargetState::Exited(e) => Some(e),
            TargetState::NotStarted => None,
        }
    }

    pub fn is_stopped(&self) -> bool {
        matches!(self.state, TargetState::Stopped(_))
    }

    /// Starts or resumes the target and waits for the next stop.
    pub fn run_to_stop(&mut self) -> Result<StopEvent, SessionError> {
        let command = match self.state {
            TargetState::Stopped(_) => "-exec-continue",
            TargetState::NotStarted | TargetState::Exited(_) => "-exec-run",
        };
        let out = self.handle.send_command(command)?;
        if let Some(msg) = out.error_message() {
            return Err(SessionError::Protocol(msg));
        }
        let event = self.finish_resume(&out)?;
        event.ok_or_else(|| SessionError::Protocol("target did not stop".into()))
    }

    /// After a command that may have resumed the target, waits for it to
    /// stop again and records the stop.
    fn finish_resume(&mut self, out: &MiOutput) -> Result<Option<StopEvent>, SessionError> {
        let resumed = out.records.iter().any(|r| {
            r.class() == Some("running")
                || matches!(r, MiRecord::Async { class, .. } if class == "running")
        });
        let mut stopped = out.records.iter().find(|r| r.is_stopped()).cloned();
        if stopped.is_none() && resumed {
            let timeout = self.handle.timeout();
            let records = self.handle.wait_for(MiRecord::is_stopped, timeout)?;
            stopped = records.last().cloned();
        }
        let Some(stopped) = stopped else {
            return Ok(None);
        };
        let mut event = StopEvent::from_stopped(stopped.payload().expect("async record"));
        if event.is_exit() {
            self.state = TargetState::Exited(event.clone());
        } else {
            let output = self.handle.captured_output();
            event.detect_assertion(&output, &self.assertion_pattern);
            self.state = TargetState::Stopped(event.clone());
        }
        Ok(Some(event))
    }

    fn require_stopped(&self) -> Result<(), SessionError> {
        if self.is_stopped() {
            Ok(())
        } else {
            Err(SessionError::NotStopped)
        }
    }

    fn command(&mut self, command: &str) -> Result<MiTuple, SessionError> {
        let out = self.handle.send_command(command)?;
        if let Some(msg) = out.error_message() {
            return Err(SessionError::EvaluationError(msg));
        }
        match out.result() {
            Some(r) => Ok(r.payload().cloned().unwrap_or_default()),
            None => Err(SessionError::Protocol(format!("no result for {command}"))),
        }
    }

    /// Total number of frames on the stack.
    pub fn stack_depth(&mut self) -> Result<usize, SessionError> {
        self.require_stopped()?;
        let payload = self.command("-stack-info-depth")?;
        payload
            .get_str("depth")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| SessionError::Protocol("missing depth".into()))
    }

    /// Frames innermost first, at most the configured cap.
    pub fn backtrace(&mut self) -> Result<Vec<Frame>, SessionError> {
        self.require_stopped()?;
        let payload = self.command(&format!("-stack-list-frames 0 {}", self.frame_cap - 1))?;
        let mut frames: Vec<Frame> = payload
            .get("stack")
            .map(|s| s.items().into_iter().filter_map(Frame::from_mi).collect())
            .unwrap_or_default();
        frames.sort_by_key(|f| f.index);
        Ok(frames)
    }

    pub fn frame_cap(&self) -> usize {
        self.frame_cap
    }

    /// Arguments and locals of one frame, innermost declaration first when
    /// names shadow each other.
    pub fn frame_variables(&mut self, index: usize) -> Result<Vec<VariableBinding>, SessionError> {
        self.require_stopped()?;
        if index >= self.stack_depth()? {
            return Err(SessionError::BadFrameIndex(index));
        }
        let typed = self.command(&format!(
            "-stack-list-variables --thread 1 --frame {index} --simple-values"
        ))?;
        let valued = self.command(&format!(
            "-stack-list-variables --thread 1 --frame {index} --all-values"
        ))?;
        let typed = typed
            .get("variables")
            .map(MiValue::items)
            .unwrap_or_default();
        let valued = valued
            .get("variables")
            .map(MiValue::items)
            .unwrap_or_default();
        let mut out: Vec<VariableBinding> = Vec::new();
        for (i, var) in typed.iter().enumerate() {
            let Some(name) = var.get_str("name") else {
                continue;
            };
            if name.is_empty() || out.iter().any(|b| b.name == name) {
                continue;
            }
            let ty = var.get_str("type").unwrap_or("");
            let value = valued
                .get(i)
                .filter(|v| v.get_str("name") == Some(name))
                .and_then(|v| v.get_str("value"))
                .or_else(|| var.get_str("value"))
                .unwrap_or("<unavailable>");
            out.push(VariableBinding::new(name, ty, value));
        }
        Ok(out)
    }

    /// Evaluates in the selected frame. Never resumes the target unless the
    /// expression itself calls a function.
    pub fn evaluate(&mut self, expression: &str) -> Result<String, SessionError> {
        let payload = self.command(&format!(
            "-data-evaluate-expression {}",
            quote_c_string(expression)
        ))?;
        Ok(payload.get_str("value").unwrap_or("").to_string())
    }

    /// Evaluates in frame `index` without changing the selected frame.
    pub fn evaluate_in_frame(
        &mut self,
        index: usize,
        expression: &str,
    ) -> Result<String, SessionError> {
        self.require_stopped()?;
        let payload = self.command(&format!(
            "-data-evaluate-expression --thread 1 --frame {index} {}",
            quote_c_string(expression)
        ))?;
        Ok(payload.get_str("value").unwrap_or("").to_string())
    }

    /// Runs a console command and returns what it printed. Debugger-level
    /// errors are part of the returned text, as a user would see them.
    pub fn execute_console(&mut self, command: &str) -> Result<String, SessionError> {
        let out = self.handle.send_command(command)?;
        let mut text = String::new();
        for r in &out.records {
            if let MiRecord::Stream {
                kind: StreamKind::Console | StreamKind::Log,
                text: t,
            } = r
            {
                // The log stream echoes error messages that ^error repeats.
                text.push_str(t);
            }
        }
        if let Some(msg) = out.error_message() {
            if !text.contains(&msg) {
                if !text.is_empty() && !text.ends_with('\n') {
                    text.push('\n');
                }
                text.push_str(&msg);
            }
        }
        if let Some(event) = self.finish_resume_after_console(&out)? {
            if !text.ends_with('\n') && !text.is_empty() {
                text.push('\n');
            }
            text.push_str(&event.detail);
        }
        Ok(text.trim_end_matches('\n').to_string())
    }

    /// Runs a command typed at the prompt or issued by the model. Plain
    /// `p expr` / `print expr` are evaluated directly so the output is the
    /// bare value (`150` rather than `$1 = 150`); everything else goes to
    /// the console. Errors come back as text.
    pub fn run_command(&mut self, command: &str) -> String {
        let command = command.trim();
        let (word, rest) = command
            .split_once(char::is_whitespace)
            .map_or((command, ""), |(w, r)| (w, r.trim()));
        let result = if matches!(word, "p" | "print") && !rest.is_empty() && !rest.starts_with('-')
        {
            self.evaluate(rest)
        } else {
            self.execute_console(command)
        };
        match result {
            Ok(text) => text,
            Err(e) => e.to_string(),
        }
    }

    fn finish_resume_after_console(
        &mut self,
        out: &MiOutput,
    ) -> Result<Option<StopEvent>, SessionError> {
        let before = self.last_stop().cloned();
        let event = self.finish_resume(out)?;
        Ok(event.filter(|e| Some(e) != before.as_ref()))
    }

    /// Level of the selected frame.
    pub fn selected_frame(&mut self) -> Result<usize, SessionError> {
        self.require_stopped()?;
        let payload = self.command("-stack-info-frame")?;
        payload
            .get("frame")
            .and_then(|f| f.get_str("level"))
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| SessionError::Protocol("missing frame level".into()))
    }

    /// Makes frame `index` the selected frame.
    pub fn select_frame(&mut self, index: usize) -> Result<(), SessionError> {
        self.require_stopped()?;
        self.command(&format!("-stack-select-frame {index}"))
            .map(|_| ())
    }

    /// Definition site of a function, global variable or type known to the
    /// debug information.
    pub fn lookup_symbol(&mut self, name: &str) -> Option<(PathBuf, u32)> {
        if !is_identifier(name) {
            return None;
        }
        for kind in ["functions", "variables", "types"] {
            let Ok(payload) = self.command(&format!("-symbol-info-{kind} --name ^{name}$")) else {
                continue;
            };
            for file in payload
                .get("symbols")
                .and_then(|s| s.get("debug"))
                .map(MiValue::items)
                .unwrap_or_default()
            {
                let path = file
                    .get_str("fullname")
                    .or_else(|| file.get_str("filename"));
                let Some(path) = path else { continue };
                for sym in file.get("symbols").map(MiValue::items).unwrap_or_default() {
                    if sym.get_str("name") != Some(name) {
                        continue;
                    }
                    if let Some(line) = sym.get_str("line").and_then(|l| l.parse().ok()) {
                        return Some((PathBuf::from(path), line));
                    }
                }
            }
        }
        None
    }

    /// Global or file-static variables named `name`, with their declared
    /// type and defining file.
    pub fn global_variable(&mut self, name: &str) -> Option<(String, PathBuf)> {
        if !is_identifier(name) {
            return None;
        }
        let payload = self
            .command(&format!("-symbol-info-variables --name ^{name}$"))
            .ok()?;
        for file in payload
            .get("symbols")
            .and_then(|s| s.get("debug"))
            .map(MiValue::items)
            .unwrap_or_default()
        {
            let path = file
                .get_str("fullname")
                .or_else(|| file.get_str("filename"))?;
            for sym in file.get("symbols").map(MiValue::items).unwrap_or_default() {
                if sym.get_str("name") == Some(name) {
                    let ty = sym.get_str("type").unwrap_or("").to_string();
                    return Some((ty, PathBuf::from(path)));
                }
            }
        }
        None
    }

    /// Line where `function` is declared, from the debug information.
    pub fn function_line(&mut self, function: &str) -> Option<u32> {
        if !is_identifier(function) {
            return None;
        }
        let payload = self
            .command(&format!("-symbol-info-functions --name ^{function}$"))
            .ok()?;
        payload
            .get("symbols")
            .and_then(|s| s.get("debug"))
            .map(MiValue::items)
            .unwrap_or_default()
            .into_iter()
            .flat_map(|f| f.get("symbols").map(MiValue::items).unwrap_or_default())
            .filter(|s| s.get_str("name") == Some(function))
            .find_map(|s| s.get_str("line").and_then(|l| l.parse().ok()))
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.handle.set_timeout(timeout);
    }

    pub fn shutdown(&mut self) {
        self.handle.shutdown();
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
